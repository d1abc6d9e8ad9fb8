#pragma once

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ndpnn/errors.hpp"
#include "ndpnn/network.hpp"

namespace ndpnn {

// NDM1 model container: magic "NDM1", u32-LE manifest length, a JSON
// manifest describing the layer stack, then one embedded NDT1 record per
// weight bank and bias in manifest order.

inline void write_model(const Network<float>& net, std::ostream& os) {
    nlohmann::json manifest;
    manifest["format"] = "NDM1";
    manifest["version"] = 1;
    manifest["input_shape"] = net.input_shape;
    manifest["class_count"] = net.class_count;
    manifest["seed"] = net.init_seed;

    std::vector<const Tensor<float>*> tensors;
    std::vector<Tensor<float>> bias_tensors; // biases materialized as rank-1 tensors
    bias_tensors.reserve(net.layers.size() * 2);

    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        nlohmann::json j;
        j["index"] = i;
        if (const auto* pc = std::get_if<PolyConvLayer<float>>(&net.layers[i])) {
            j["type"] = "pconv";
            j["rank"] = pc->spatial_rank;
            j["degree"] = pc->degree;
            j["extents"] = pc->kernel_extents;
            j["in_channels"] = pc->in_channels;
            j["out_channels"] = pc->out_channels;
            j["activation"] = activation_name(pc->activation);
            for (const auto& w : pc->weights) tensors.push_back(&w);
            bias_tensors.emplace_back(std::vector<std::size_t>{pc->bias.size()},
                                      std::vector<float>(pc->bias.begin(), pc->bias.end()));
            tensors.push_back(&bias_tensors.back());
        } else if (const auto* mp = std::get_if<MaxPoolLayer>(&net.layers[i])) {
            j["type"] = "pool";
            j["window"] = mp->window;
        } else if (std::holds_alternative<FlattenLayer>(net.layers[i])) {
            j["type"] = "flatten";
        } else {
            const auto& dn = std::get<DenseLayer<float>>(net.layers[i]);
            j["type"] = "dense";
            j["in_features"] = dn.in_features;
            j["out_features"] = dn.out_features;
            j["activation"] = activation_name(dn.activation);
            tensors.push_back(&dn.weight);
            bias_tensors.emplace_back(std::vector<std::size_t>{dn.bias.size()},
                                      std::vector<float>(dn.bias.begin(), dn.bias.end()));
            tensors.push_back(&bias_tensors.back());
        }
        layers.push_back(std::move(j));
    }
    manifest["layers"] = std::move(layers);
    manifest["tensor_count"] = tensors.size();

    const std::string text = manifest.dump();
    os.write("NDM1", 4);
    detail::put_u32le(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* t : tensors) write_ndt1(*t, os);
    if (!os) throw format_error("NDM1: write failed");
}

inline Network<float> read_model(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "NDM1", 4) != 0)
        throw format_error("NDM1: bad magic");
    std::uint32_t len;
    if (!detail::get_u32le(is, len)) throw format_error("NDM1: truncated header");
    std::string text(len, '\0');
    if (!is.read(text.data(), len)) throw format_error("NDM1: truncated manifest");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("NDM1: bad manifest: ") + e.what());
    }

    Network<float> net;
    try {
        net.input_shape = manifest.at("input_shape").get<std::vector<std::size_t>>();
        net.class_count = manifest.at("class_count").get<std::size_t>();
        net.init_seed = manifest.value("seed", std::uint64_t{0});

        auto next_tensor = [&is]() { return read_ndt1(is); };
        for (const auto& j : manifest.at("layers")) {
            const std::string type = j.at("type").get<std::string>();
            if (type == "pconv") {
                PolyConvLayer<float> pc;
                pc.spatial_rank = j.at("rank").get<int>();
                pc.degree = j.at("degree").get<int>();
                pc.kernel_extents = j.at("extents").get<std::vector<std::size_t>>();
                pc.in_channels = j.at("in_channels").get<std::size_t>();
                pc.out_channels = j.at("out_channels").get<std::size_t>();
                pc.activation = parse_activation(j.at("activation").get<std::string>());
                for (int d = 0; d < pc.degree; ++d) pc.weights.push_back(next_tensor());
                const Tensor<float> bias = next_tensor();
                pc.bias.assign(bias.data(), bias.data() + bias.size());
                pc.validate();
                net.layers.emplace_back(std::move(pc));
            } else if (type == "pool") {
                MaxPoolLayer mp;
                mp.window = j.at("window").get<int>();
                net.layers.emplace_back(mp);
            } else if (type == "flatten") {
                net.layers.emplace_back(FlattenLayer{});
            } else if (type == "dense") {
                DenseLayer<float> dn;
                dn.in_features = j.at("in_features").get<std::size_t>();
                dn.out_features = j.at("out_features").get<std::size_t>();
                dn.activation = parse_activation(j.at("activation").get<std::string>());
                dn.weight = next_tensor();
                if (dn.weight.shape() != std::vector<std::size_t>{dn.out_features, dn.in_features})
                    throw format_error("NDM1: dense weight shape mismatch");
                const Tensor<float> bias = next_tensor();
                dn.bias.assign(bias.data(), bias.data() + bias.size());
                net.layers.emplace_back(std::move(dn));
            } else {
                throw format_error("NDM1: unknown layer type '" + type + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("NDM1: bad manifest: ") + e.what());
    }
    return net;
}

inline void write_model(const Network<float>& net, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw format_error("NDM1: cannot open for writing: " + path.string());
    write_model(net, os);
}

inline Network<float> read_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error("NDM1: cannot open: " + path.string());
    return read_model(is);
}

/// Turns one on-disk (M, C, h, w) window stack into network input layout:
/// channels first, frames as the leading spatial axis, (C, M, h, w); a
/// single-frame stack squeezes to (C, h, w).
template <typename Scalar>
Tensor<Scalar> stack_to_network_input(const Tensor<Scalar>& stack) {
    if (stack.rank() != 4) throw shape_error("stack_to_network_input: expected (M, C, h, w)");
    const std::size_t m = stack.extent(0), c = stack.extent(1), h = stack.extent(2),
                      w = stack.extent(3);
    if (m == 1) {
        Tensor<Scalar> out({c, h, w});
        std::copy(stack.data(), stack.data() + stack.size(), out.data());
        return out;
    }
    Tensor<Scalar> out({c, m, h, w});
    for (std::size_t mi = 0; mi < m; ++mi)
        for (std::size_t ci = 0; ci < c; ++ci) {
            const Scalar* src = stack.data() + (mi * c + ci) * h * w;
            Scalar* dst = out.data() + (ci * m + mi) * h * w;
            std::copy(src, src + h * w, dst);
        }
    return out;
}

} // namespace ndpnn
