// Command-line front end: plan geometry, build synthetic datasets, resample
// manifests, turn images into window stacks, train and compress polynomial
// convolutional networks, and report metrics.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ndpnn/dataset.hpp"
#include "ndpnn/geometry.hpp"
#include "ndpnn/image_io.hpp"
#include "ndpnn/metrics.hpp"
#include "ndpnn/model_io.hpp"
#include "ndpnn/network.hpp"
#include "ndpnn/reduce.hpp"
#include "ndpnn/train.hpp"
#include "ndpnn/transform.hpp"

namespace fs = std::filesystem;
using namespace ndpnn;

namespace {

constexpr const char* kVersion = "ndpnn 0.1.0 (formats: NDT1, NDM1 v1)";

/// Violations of flag/config constraints; mapped to exit code 2 and raised
/// before any filesystem writes.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

void write_run_log(const fs::path& out_dir, const std::string& command, const KeyValues& config) {
    std::ofstream log(out_dir / "run.log");
    log << "version: " << kVersion << "\n";
    log << "command: " << command << "\n";
    for (const auto& [k, v] : config) log << k << " = " << v << "\n";
}

std::string fmt(double v, int digits = 10) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

ParameterOrder parse_order(const std::string& name) {
    if (name == "m_amin_amax") return ParameterOrder::m_amin_amax;
    if (name == "m_amax_amin") return ParameterOrder::m_amax_amin;
    if (name == "amin_m_amax") return ParameterOrder::amin_m_amax;
    if (name == "amin_amax_m") return ParameterOrder::amin_amax_m;
    if (name == "amax_m_amin") return ParameterOrder::amax_m_amin;
    if (name == "amax_amin_m") return ParameterOrder::amax_amin_m;
    throw UsageError("unknown parameter order '" + name + "'");
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

/// Config files are flat `key = value` text with `#` comments; keys are the
/// long flag names without the leading dashes. The file's settings are
/// spliced in right after the subcommand so explicit flags override them.
std::vector<std::string> expand_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw UsageError("--config needs a file path");
            config_path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                       args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (config_path.empty()) return args;

    std::ifstream is(config_path);
    if (!is) throw UsageError("cannot open config file '" + config_path + "'");
    std::vector<std::string> expanded;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string text = trim(line);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw UsageError("config " + config_path + ":" + std::to_string(line_no) +
                             ": expected key = value");
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (key.empty() || value.empty())
            throw UsageError("config " + config_path + ":" + std::to_string(line_no) +
                             ": empty key or value");
        expanded.push_back("--" + key);
        expanded.push_back(value);
    }

    std::vector<std::string> out;
    out.push_back(args.front()); // subcommand
    out.insert(out.end(), expanded.begin(), expanded.end());
    out.insert(out.end(), args.begin() + 1, args.end());
    return out;
}

// ---------------------------------------------------------------------------
// plan
// ---------------------------------------------------------------------------

struct PlanOpts {
    int hmin = 0, hmax = 0, m = 9;
    double alpha_min = 0.1, alpha_max = 0.9;
    std::string order = "amin_amax_m";
    double equiv_params = 0.0, r2 = 9.0, r3 = 27.0;
};

int run_plan(const PlanOpts& o) {
    if (o.hmin < 1 || o.hmax < o.hmin)
        throw UsageError("plan: need 1 <= hmin <= hmax (got hmin=" + std::to_string(o.hmin) +
                         ", hmax=" + std::to_string(o.hmax) + ")");
    if (!(o.alpha_min >= 0.0 && o.alpha_min <= o.alpha_max && o.alpha_max < 1.0))
        throw UsageError("plan: need 0 <= alpha-min <= alpha-max < 1 (got alpha-min=" +
                         std::to_string(o.alpha_min) + ", alpha-max=" + std::to_string(o.alpha_max) +
                         ")");

    const auto res =
        validate_parameter_order(parse_order(o.order), o.hmin, o.hmax, o.m, o.alpha_min, o.alpha_max);
    if (!res.ok) {
        std::cout << "order: " << o.order << " FAIL\nviolated: " << res.violated << "\n";
        throw infeasible_error("parameter order check failed: " + res.violated);
    }
    std::cout << "order: " << o.order << " PASS\n";

    const auto iv = feasible_window_height_range(o.hmin, o.hmax, o.m, o.alpha_min, o.alpha_max);
    std::cout << "h_range: [" << fmt(iv.lo) << ", " << fmt(iv.hi) << "]\n";
    const int suggested = static_cast<int>(std::ceil(iv.lo - kGeomTol));
    if (suggested <= iv.hi + kGeomTol) {
        std::cout << "suggested_h: " << suggested << "\n";
        std::cout << "alpha(H=" << o.hmax << "): " << fmt(overlap_square(o.hmax, suggested, o.m))
                  << "\n";
        std::cout << "alpha(H=" << o.hmin << "): " << fmt(overlap_square(o.hmin, suggested, o.m))
                  << "\n";
    } else {
        std::cout << "suggested_h: none (no integer in range)\n";
    }
    const double ratio = max_height_ratio(o.m, o.alpha_min, o.alpha_max);
    std::cout << "max_height_ratio: " << fmt(ratio) << "\n";
    std::cout << "clamp_bound_for_hmin: " << fmt(o.hmin * ratio) << "\n";
    std::cout << "oversampling_at_alpha_max: " << fmt(oversampling_factor(o.alpha_max)) << "\n";

    if (o.equiv_params > 0.0)
        std::cout << "equivalent_width_N: " << solve_equivalent_width(o.equiv_params, o.r2, o.r3)
                  << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOpts {
    std::string out;
    int classes = 2;
    std::size_t count = 0;
    int size_min = 0, size_max = 0;
    int channels = 1;
    std::uint64_t seed = 0;
    std::vector<std::string> class_ranges; // label:lo:hi overrides
};

int run_synth(const SynthOpts& o) {
    if (o.count == 0) throw UsageError("synth: --count must be positive");
    if (o.classes < 1) throw UsageError("synth: --classes must be >= 1");
    if (o.size_min < 8 || o.size_max < o.size_min)
        throw UsageError("synth: need 8 <= size-min <= size-max");

    SynthSpec spec;
    spec.count = o.count;
    spec.seed = o.seed;
    spec.channels = o.channels;
    for (int c = 0; c < o.classes; ++c)
        spec.classes.push_back({"class" + std::to_string(c), o.size_min, o.size_max});
    for (const auto& r : o.class_ranges) {
        const auto f = detail::split(r, ':');
        if (f.size() != 3) throw UsageError("synth: --class-range wants label:lo:hi, got '" + r + "'");
        bool found = false;
        for (auto& cs : spec.classes)
            if (cs.label == f[0]) {
                cs.size_min = detail::parse_int_field(f[1], "class size");
                cs.size_max = detail::parse_int_field(f[2], "class size");
                found = true;
            }
        if (!found) throw UsageError("synth: --class-range names unknown class '" + f[0] + "'");
    }
    for (const auto& cs : spec.classes)
        if (cs.size_min < 8 || cs.size_max < cs.size_min)
            throw UsageError("synth: bad size range for class " + cs.label);

    fs::create_directories(o.out);
    write_run_log(o.out, "synth",
                  {{"classes", std::to_string(o.classes)},
                   {"count", std::to_string(o.count)},
                   {"size_min", std::to_string(o.size_min)},
                   {"size_max", std::to_string(o.size_max)},
                   {"channels", std::to_string(o.channels)},
                   {"seed", std::to_string(o.seed)}});

    DatasetManifest manifest;
    for (std::size_t k = 0; k < spec.count; ++k) {
        auto si = synth_image(spec, k);
        write_png(si.image, fs::path(o.out) / si.entry.path);
        manifest.entries.push_back(std::move(si.entry));
    }
    write_manifest(manifest, fs::path(o.out) / "manifest.csv");
    std::cout << "synth: wrote " << spec.count << " images and manifest.csv under " << o.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// resample
// ---------------------------------------------------------------------------

struct ResampleOpts {
    std::string manifest;
    std::string out;
    double train_ratio = 0.8;
    int bins = 8;
    std::uint64_t seed = 0;
};

int run_resample(const ResampleOpts& o) {
    if (!(o.train_ratio > 0.0 && o.train_ratio < 1.0))
        throw UsageError("resample: --train-ratio must lie in (0, 1)");
    if (o.bins < 1) throw UsageError("resample: --bins must be >= 1");
    const auto manifest = read_manifest(o.manifest);

    fs::create_directories(o.out);
    write_run_log(o.out, "resample",
                  {{"manifest", o.manifest},
                   {"train_ratio", fmt(o.train_ratio, 4)},
                   {"bins", std::to_string(o.bins)},
                   {"seed", std::to_string(o.seed)}});

    const auto before = distribution_report(manifest, o.bins);
    const auto res = stratified_resplit(manifest, o.train_ratio, o.bins, o.seed);
    const auto after = distribution_report(res.manifest, o.bins);

    write_manifest(res.manifest, fs::path(o.out) / "manifest.csv");
    std::ofstream rep(fs::path(o.out) / "distribution.txt");
    rep << "== before ==\n" << format_distribution_report(before);
    rep << "== after ==\n" << format_distribution_report(after);
    for (const auto& w : res.warnings) {
        rep << "warning: " << w << "\n";
        std::cerr << "warning: " << w << "\n";
    }
    std::cout << "resample: wrote manifest.csv and distribution.txt under " << o.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// transform
// ---------------------------------------------------------------------------

struct TransformOpts {
    std::string input; // manifest.csv or a directory of PNGs
    std::string data;  // image base dir for manifest inputs (default: manifest directory)
    std::string out;
    int h = 0, m = 9;
    double gamma = 1.0;
    double alpha_min = 0.1, alpha_max = 0.9;
    int hmin_clamp = 0, hmax_clamp = 0; // 0: derive from (h, m, alpha range)
    std::string pattern = "horizontal";
    std::string small_mode = "pad";
    int threads = 1;
};

GeometrySpec transform_spec(const TransformOpts& o) {
    GeometrySpec g;
    g.window_count = o.m;
    g.alpha_min = o.alpha_min;
    g.alpha_max = o.alpha_max;
    g.window_height = o.h;
    g.gamma = o.gamma;
    const double sq = std::sqrt(static_cast<double>(o.m));
    g.h_min_clamp = o.hmin_clamp > 0
                        ? o.hmin_clamp
                        : static_cast<int>(std::ceil(o.h * (sq - o.alpha_max * (sq - 1.0)) - 1e-9));
    g.h_max_clamp = o.hmax_clamp > 0
                        ? o.hmax_clamp
                        : static_cast<int>(std::floor(o.h * (sq - o.alpha_min * (sq - 1.0)) + 1e-9));
    if (o.m == 1) g.h_min_clamp = g.h_max_clamp = o.h;
    return g;
}

int run_transform(const TransformOpts& o) {
    if (o.h < 1) throw UsageError("transform: --h must be positive");
    const int s = static_cast<int>(std::llround(std::sqrt(static_cast<double>(o.m))));
    if (o.m < 1 || s * s != o.m) throw UsageError("transform: --m must be a square integer");
    if (!(o.alpha_min >= 0.0 && o.alpha_min <= o.alpha_max && o.alpha_max < 1.0))
        throw UsageError("transform: need 0 <= alpha-min <= alpha-max < 1 (got alpha-min=" +
                         std::to_string(o.alpha_min) + ", alpha-max=" +
                         std::to_string(o.alpha_max) + ")");
    const auto pattern = parse_pattern(o.pattern);
    const auto small_mode = parse_small_mode(o.small_mode);
    GeometrySpec spec = transform_spec(o);
    spec.validate();

    DatasetManifest manifest;
    bool have_manifest = false;
    fs::path base;
    if (fs::is_directory(o.input)) {
        base = o.input;
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(o.input))
            if (e.path().extension() == ".png") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            ManifestEntry e;
            e.id = f.stem().string();
            e.path = f.filename().string();
            e.label = "unknown";
            e.height = e.width = 1; // filled after decode
            manifest.entries.push_back(e);
        }
        if (manifest.entries.empty())
            throw std::invalid_argument("transform: no .png files under " + o.input);
    } else {
        manifest = read_manifest(o.input);
        base = o.data.empty() ? fs::path(o.input).parent_path() : fs::path(o.data);
        have_manifest = true;
    }

    fs::create_directories(o.out);
    write_run_log(o.out, "transform",
                  {{"input", o.input},
                   {"h", std::to_string(o.h)},
                   {"m", std::to_string(o.m)},
                   {"gamma", fmt(o.gamma, 4)},
                   {"alpha_min", fmt(o.alpha_min, 4)},
                   {"alpha_max", fmt(o.alpha_max, 4)},
                   {"hmin_clamp", std::to_string(spec.h_min_clamp)},
                   {"hmax_clamp", std::to_string(spec.h_max_clamp)},
                   {"pattern", o.pattern},
                   {"small_mode", o.small_mode},
                   {"threads", std::to_string(o.threads)}});

    // Per-image work is independent and each image owns its output file, so
    // the worker count never changes any byte of the outputs; log lines are
    // collected per index and written in manifest order.
    const std::size_t n = manifest.entries.size();
    std::vector<std::string> log_lines(n);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                auto& entry = manifest.entries[i];
                const auto image = read_png(base / entry.path);
                const auto clamped =
                    clamp_resize(image, spec.h_min_clamp, spec.h_max_clamp, small_mode);
                auto ws = extract_stack(clamped, spec, pattern, entry.id);
                write_ndt1(ws.stack, fs::path(o.out) / (entry.id + ".ndt"));
                std::ostringstream line;
                line << entry.id << ", " << clamped.extent(1) << ", " << clamped.extent(2) << ", "
                     << fmt(ws.alpha) << ", " << o.pattern;
                log_lines[i] = line.str();
                entry.path = entry.id + ".ndt";
                entry.height = static_cast<int>(clamped.extent(1));
                entry.width = static_cast<int>(clamped.extent(2));
            } catch (...) {
                const std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers =
        std::min<std::size_t>(std::max(1, o.threads), std::min<std::size_t>(hw, n));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::ofstream log(fs::path(o.out) / "transform.log");
    for (const auto& line : log_lines) log << line << "\n";
    if (have_manifest) write_manifest(manifest, fs::path(o.out) / "manifest.csv");
    std::cout << "transform: wrote " << n << " stacks under " << o.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// shared dataset loading for train / reduce / eval
// ---------------------------------------------------------------------------

struct LoadedSplit {
    Dataset<float> data;
    std::vector<std::string> classes;
    std::vector<std::size_t> input_shape;
};

LoadedSplit load_split(const std::string& manifest_path, const std::string& data_dir,
                       const std::string& split) {
    const auto manifest = read_manifest(manifest_path);
    const fs::path base =
        data_dir.empty() ? fs::path(manifest_path).parent_path() : fs::path(data_dir);
    LoadedSplit out;
    out.classes = manifest.classes();
    std::map<std::string, int> label_of;
    for (std::size_t i = 0; i < out.classes.size(); ++i)
        label_of[out.classes[i]] = static_cast<int>(i) + 1;

    for (const auto& e : manifest.entries) {
        if (e.split != split) continue;
        const auto stack = read_ndt1(base / e.path);
        auto x = stack_to_network_input(stack);
        if (out.input_shape.empty())
            out.input_shape = x.shape();
        else if (x.shape() != out.input_shape)
            throw shape_error("dataset: stack shape " + shape_string(x.shape()) + " for id '" +
                              e.id + "' differs from " + shape_string(out.input_shape));
        out.data.samples.push_back(std::move(x));
        out.data.labels.push_back(label_of[e.label]);
    }
    if (out.data.samples.empty())
        throw std::invalid_argument("dataset: split '" + split + "' is empty in " + manifest_path);
    return out;
}

std::vector<double> label_priors(const Dataset<float>& data, std::size_t classes) {
    std::vector<double> p(classes, 0.0);
    for (int label : data.labels) p[static_cast<std::size_t>(label - 1)] += 1.0;
    for (double& v : p) v = std::max(v, 0.5) / static_cast<double>(data.labels.size());
    return p;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOpts {
    std::string manifest;
    std::string data;
    std::string out;
    std::string arch;
    std::string preset; // depth:degree alternative to --arch
    std::size_t epochs = 100;
    std::size_t batch = 128;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    bool prior_bias = false;
    std::string val = "test";
};

int run_train(const TrainOpts& o) {
    if (o.arch.empty() == o.preset.empty())
        throw UsageError("train: give exactly one of --arch or --preset depth:degree");
    if (o.epochs < 1) throw UsageError("train: --epochs must be >= 1");
    if (o.batch < 1) throw UsageError("train: --batch must be >= 1");
    if (o.lr < 0.0) throw UsageError("train: --lr must be >= 0");
    if (o.val != "test" && o.val != "none")
        throw UsageError("train: --val must be 'test' or 'none'");

    auto split = load_split(o.manifest, o.data, "train");
    std::string arch = o.arch;
    if (!o.preset.empty()) {
        const auto f = detail::split(o.preset, ':');
        if (f.size() != 2) throw UsageError("train: --preset wants depth:degree");
        arch = preset_arch(detail::parse_int_field(f[0], "preset depth"),
                           detail::parse_int_field(f[1], "preset degree"));
    }

    auto net = build_network<float>(arch, split.input_shape, split.classes.size(), o.seed);
    init_weights(net);
    if (o.prior_bias) set_head_bias(net, label_priors(split.data, split.classes.size()));

    TrainConfig cfg;
    cfg.learning_rate = o.lr;
    cfg.batch_size = std::min(o.batch, split.data.size());
    cfg.epochs = o.epochs;
    cfg.seed = o.seed;

    std::optional<LoadedSplit> val;
    if (o.val == "test") {
        try {
            val = load_split(o.manifest, o.data, "test");
        } catch (const std::invalid_argument&) {
            val.reset(); // empty test split: train without validation
        }
    }

    fs::create_directories(o.out);
    write_run_log(o.out, "train",
                  {{"manifest", o.manifest},
                   {"arch", arch},
                   {"epochs", std::to_string(o.epochs)},
                   {"batch", std::to_string(cfg.batch_size)},
                   {"lr", fmt(o.lr, 6)},
                   {"seed", std::to_string(o.seed)},
                   {"prior_bias", o.prior_bias ? "true" : "false"},
                   {"classes", std::to_string(split.classes.size())},
                   {"train_samples", std::to_string(split.data.size())}});

    const auto log = train(net, split.data, cfg, val ? &val->data : nullptr);

    write_model(net, fs::path(o.out) / "model.ndm");
    std::ofstream elog(fs::path(o.out) / "epochs.log");
    elog << "epoch, loss, train_acc, val_acc\n";
    for (const auto& s : log) elog << epoch_log_line(s) << "\n";
    std::cout << "train: final train_acc " << log.back().train_accuracy;
    if (log.back().has_val) std::cout << ", val_acc " << log.back().val_accuracy;
    std::cout << "; model.ndm and epochs.log under " << o.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// reduce
// ---------------------------------------------------------------------------

struct ReduceOpts {
    std::string model;
    std::string manifest;
    std::string data;
    std::string out;
    double tolerance = 0.0;
};

int run_reduce(const ReduceOpts& o) {
    if (o.tolerance < 0.0) throw UsageError("reduce: --tolerance must be >= 0");
    const auto net = read_model(o.model);
    auto split = load_split(o.manifest, o.data, "train");

    fs::create_directories(o.out);
    write_run_log(o.out, "reduce",
                  {{"model", o.model},
                   {"manifest", o.manifest},
                   {"tolerance", fmt(o.tolerance, 6)}});

    const EvalFn<float> acc = [](const Network<float>& n, const Dataset<float>& d) {
        return dataset_accuracy(n, d);
    };
    const double baseline = acc(net, split.data);
    const auto [reduced, plan] = reduce_network(net, split.data, acc, baseline - o.tolerance);

    write_model(reduced, fs::path(o.out) / "model.ndm");
    std::ofstream rep(fs::path(o.out) / "plan.txt");
    rep << "baseline_score: " << fmt(plan.baseline_score) << "\n";
    rep << "threshold: " << fmt(plan.threshold) << "\n";
    rep << format_reduction_report(plan, net, reduced);
    std::cout << "reduce: degrees";
    for (int d : poly_degrees(reduced)) std::cout << ' ' << d;
    std::cout << "; params " << parameter_count(net) << " -> " << parameter_count(reduced)
              << "; model.ndm and plan.txt under " << o.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOpts {
    std::string model;
    std::string manifest;
    std::string data;
    std::string out;
    std::string split = "test";
};

int run_eval(const EvalOpts& o) {
    if (o.split != "train" && o.split != "test")
        throw UsageError("eval: --split must be 'train' or 'test'");
    const auto net = read_model(o.model);
    auto split = load_split(o.manifest, o.data, o.split);

    fs::create_directories(o.out);
    write_run_log(o.out, "eval",
                  {{"model", o.model}, {"manifest", o.manifest}, {"split", o.split}});

    const auto t0 = std::chrono::steady_clock::now();
    const auto confusion = confusion_matrix(net, split.data);
    const auto t1 = std::chrono::steady_clock::now();
    const double ms_per_sample =
        std::chrono::duration<double, std::milli>(t1 - t0).count() /
        static_cast<double>(split.data.size());
    const auto rep = evaluate_metrics(confusion);

    {
        std::ofstream cm(fs::path(o.out) / "confusion.csv");
        for (std::size_t i = 0; i < split.classes.size(); ++i)
            cm << (i ? "," : "") << split.classes[i];
        cm << "\n";
        for (Eigen::Index r = 0; r < confusion.rows(); ++r) {
            for (Eigen::Index c = 0; c < confusion.cols(); ++c)
                cm << (c ? "," : "") << confusion(r, c);
            cm << "\n";
        }
    }
    {
        std::ofstream mt(fs::path(o.out) / "metrics.csv");
        mt << "metric,value\n";
        mt << "accuracy," << fmt(rep.accuracy) << "\n";
        mt << "macro_precision," << fmt(rep.macro_precision) << "\n";
        mt << "macro_recall," << fmt(rep.macro_recall) << "\n";
        mt << "macro_f1," << fmt(rep.macro_f1) << "\n";
        mt << "weighted_precision," << fmt(rep.weighted_precision) << "\n";
        mt << "weighted_recall," << fmt(rep.weighted_recall) << "\n";
        mt << "weighted_f1," << fmt(rep.weighted_f1) << "\n";
        for (std::size_t k = 0; k < rep.per_class.size(); ++k) {
            mt << "precision_" << split.classes[k] << "," << fmt(rep.per_class[k].precision) << "\n";
            mt << "recall_" << split.classes[k] << "," << fmt(rep.per_class[k].recall) << "\n";
            mt << "f1_" << split.classes[k] << "," << fmt(rep.per_class[k].f1) << "\n";
        }
    }
    {
        std::ofstream txt(fs::path(o.out) / "metrics.txt");
        txt << "samples: " << rep.total << "\n";
        txt << "accuracy: " << fmt(rep.accuracy) << "\n";
        txt << "macro precision/recall/f1: " << fmt(rep.macro_precision) << " / "
            << fmt(rep.macro_recall) << " / " << fmt(rep.macro_f1) << "\n";
        txt << "weighted precision/recall/f1: " << fmt(rep.weighted_precision) << " / "
            << fmt(rep.weighted_recall) << " / " << fmt(rep.weighted_f1) << "\n";
        txt << "mean_inference_ms_per_sample: " << fmt(ms_per_sample, 4) << "\n";
    }
    std::cout << "eval: accuracy " << fmt(rep.accuracy, 6) << " on " << rep.total
              << " samples; reports under " << o.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportOpts {
    std::string eval_dir;
    std::string model;
    std::string reduced_model;
    std::string out;
};

int run_report(const ReportOpts& o) {
    const fs::path eval(o.eval_dir);
    if (!fs::exists(eval / "confusion.csv") || !fs::exists(eval / "metrics.csv"))
        throw std::invalid_argument("report: missing confusion.csv/metrics.csv under " + o.eval_dir);

    std::ifstream cm(eval / "confusion.csv");
    std::string line;
    std::getline(cm, line);
    const std::string class_header = line;
    std::vector<std::string> confusion_rows;
    while (std::getline(cm, line))
        if (!line.empty()) confusion_rows.push_back(line);

    std::ifstream ms(eval / "metrics.csv");
    std::vector<std::pair<std::string, std::string>> metrics;
    std::getline(ms, line); // header
    while (std::getline(ms, line)) {
        const auto pos = line.find(',');
        if (pos != std::string::npos)
            metrics.emplace_back(line.substr(0, pos), line.substr(pos + 1));
    }

    std::string timing = "n/a";
    if (fs::exists(eval / "metrics.txt")) {
        std::ifstream mt(eval / "metrics.txt");
        while (std::getline(mt, line))
            if (line.rfind("mean_inference_ms_per_sample:", 0) == 0)
                timing = line.substr(line.find(':') + 2);
    }

    fs::create_directories(o.out);
    write_run_log(o.out, "report", {{"eval", o.eval_dir}, {"model", o.model}});
    fs::copy_file(eval / "confusion.csv", fs::path(o.out) / "confusion.csv",
                  fs::copy_options::overwrite_existing);

    std::ofstream txt(fs::path(o.out) / "report.txt");
    std::ofstream csv(fs::path(o.out) / "report.csv");
    csv << "metric,value\n";
    txt << "== metrics ==\n";
    for (const auto& [k, v] : metrics) {
        txt << k << ": " << v << "\n";
        csv << k << ',' << v << "\n";
    }
    txt << "mean_inference_ms_per_sample: " << timing << "\n";
    txt << "== confusion matrix (rows = actual) ==\n";
    txt << class_header << "\n";
    for (const auto& r : confusion_rows) txt << r << "\n";

    if (!o.model.empty()) {
        const auto original = read_model(o.model);
        txt << "== model ==\n";
        txt << "parameters: " << parameter_count(original) << "\n";
        csv << "parameters," << parameter_count(original) << "\n";
        txt << "degrees:";
        for (int d : poly_degrees(original)) txt << ' ' << d;
        txt << "\n";
        if (!o.reduced_model.empty()) {
            const auto reduced = read_model(o.reduced_model);
            txt << "reduced parameters: " << parameter_count(reduced) << "\n";
            csv << "reduced_parameters," << parameter_count(reduced) << "\n";
            txt << "reduced degrees:";
            for (int d : poly_degrees(reduced)) txt << ' ' << d;
            txt << "\n";
            const double ratio = static_cast<double>(parameter_count(original)) /
                                 static_cast<double>(parameter_count(reduced));
            txt << "parameter_ratio: " << fmt(ratio, 4) << "\n";
            csv << "parameter_ratio," << fmt(ratio, 4) << "\n";
        }
    }
    std::cout << "report: wrote report.txt and report.csv under " << o.out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"variable-size images to fixed window stacks, polynomial conv nets, "
                 "and layer-wise degree reduction"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    PlanOpts plan;
    auto* plan_cmd = app.add_subcommand("plan", "check geometry parameters and window heights");
    plan_cmd->add_option("--hmin", plan.hmin, "smallest image height")->required();
    plan_cmd->add_option("--hmax", plan.hmax, "largest image height")->required();
    plan_cmd->add_option("--m", plan.m, "window count (square integer)")->required();
    plan_cmd->add_option("--alpha-min", plan.alpha_min, "overlap lower limit");
    plan_cmd->add_option("--alpha-max", plan.alpha_max, "overlap upper limit");
    plan_cmd->add_option("--order", plan.order, "parameter choice order to validate");
    plan_cmd->add_option("--equiv-params", plan.equiv_params,
                         "solve the matching inner width for this parameter count");
    plan_cmd->add_option("--r2", plan.r2, "2D receptive field");
    plan_cmd->add_option("--r3", plan.r3, "3D receptive field");

    SynthOpts synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic variable-size dataset");
    synth_cmd->add_option("--out", synth.out, "output directory")->required();
    synth_cmd->add_option("--classes", synth.classes, "class count");
    synth_cmd->add_option("--count", synth.count, "total image count")->required();
    synth_cmd->add_option("--size-min", synth.size_min, "smallest image height")->required();
    synth_cmd->add_option("--size-max", synth.size_max, "largest image height")->required();
    synth_cmd->add_option("--channels", synth.channels, "1 or 3");
    synth_cmd->add_option("--seed", synth.seed, "rng seed");
    synth_cmd->add_option("--class-range", synth.class_ranges,
                          "per-class size override label:lo:hi (repeatable)");

    ResampleOpts resample;
    auto* resample_cmd =
        app.add_subcommand("resample", "stratified train/test resplit of a manifest");
    resample_cmd->add_option("--manifest", resample.manifest, "input manifest.csv")->required();
    resample_cmd->add_option("--out", resample.out, "output directory")->required();
    resample_cmd->add_option("--train-ratio", resample.train_ratio, "train fraction");
    resample_cmd->add_option("--bins", resample.bins, "size bins");
    resample_cmd->add_option("--seed", resample.seed, "rng seed");

    TransformOpts transform;
    auto* transform_cmd =
        app.add_subcommand("transform", "turn images into fixed-size window stacks");
    transform_cmd->set_help_flag("--help", "print help"); // frees -h for --h
    transform_cmd->add_option("input", transform.input, "manifest.csv or a directory of PNGs")
        ->required();
    transform_cmd->add_option("--data", transform.data,
                              "image directory for manifest inputs (default: manifest directory)");
    transform_cmd->add_option("--out", transform.out, "output directory")->required();
    transform_cmd->add_option("--h", transform.h, "window height")->required();
    transform_cmd->add_option("--m", transform.m, "window count (square integer)");
    transform_cmd->add_option("--gamma", transform.gamma, "window aspect ratio, width = gamma*h");
    transform_cmd->add_option("--alpha-min", transform.alpha_min, "overlap lower limit");
    transform_cmd->add_option("--alpha-max", transform.alpha_max, "overlap upper limit");
    transform_cmd->add_option("--hmin-clamp", transform.hmin_clamp,
                              "pad/magnify shorter images to this height (0: derive)");
    transform_cmd->add_option("--hmax-clamp", transform.hmax_clamp,
                              "shrink taller images to this height (0: derive)");
    transform_cmd->add_option("--pattern", transform.pattern, "horizontal | vertical | spiral");
    transform_cmd->add_option("--small-mode", transform.small_mode, "pad | magnify");
    transform_cmd->add_option("--threads", transform.threads, "worker cap");

    TrainOpts train_o;
    auto* train_cmd = app.add_subcommand("train", "train a network on transformed stacks");
    train_cmd->add_option("--manifest", train_o.manifest, "manifest.csv with splits")->required();
    train_cmd->add_option("--data", train_o.data, "stack directory (default: manifest directory)");
    train_cmd->add_option("--out", train_o.out, "output directory")->required();
    train_cmd->add_option("--arch", train_o.arch, "architecture string");
    train_cmd->add_option("--preset", train_o.preset, "conv-stage preset depth:degree");
    train_cmd->add_option("--epochs", train_o.epochs, "epoch count");
    train_cmd->add_option("--batch", train_o.batch, "batch size");
    train_cmd->add_option("--lr", train_o.lr, "learning rate");
    train_cmd->add_option("--seed", train_o.seed, "rng seed");
    train_cmd->add_flag("--prior-bias", train_o.prior_bias,
                        "initialize head biases from train class priors");
    train_cmd->add_option("--val", train_o.val, "per-epoch validation split: test | none");

    ReduceOpts reduce_o;
    auto* reduce_cmd =
        app.add_subcommand("reduce", "layer-wise polynomial degree reduction of a model");
    reduce_cmd->add_option("--model", reduce_o.model, "trained model.ndm")->required();
    reduce_cmd->add_option("--manifest", reduce_o.manifest, "manifest.csv with splits")->required();
    reduce_cmd->add_option("--data", reduce_o.data, "stack directory");
    reduce_cmd->add_option("--out", reduce_o.out, "output directory")->required();
    reduce_cmd->add_option("--tolerance", reduce_o.tolerance,
                           "allowed drop of the train score (0: none)");

    EvalOpts eval_o;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a model on a split");
    eval_cmd->add_option("--model", eval_o.model, "model.ndm")->required();
    eval_cmd->add_option("--manifest", eval_o.manifest, "manifest.csv with splits")->required();
    eval_cmd->add_option("--data", eval_o.data, "stack directory");
    eval_cmd->add_option("--out", eval_o.out, "output directory")->required();
    eval_cmd->add_option("--split", eval_o.split, "train | test");

    ReportOpts report_o;
    auto* report_cmd = app.add_subcommand("report", "collect evaluation artifacts into a report");
    report_cmd->add_option("--eval", report_o.eval_dir, "eval output directory")->required();
    report_cmd->add_option("--model", report_o.model, "original model.ndm");
    report_cmd->add_option("--reduced-model", report_o.reduced_model, "reduced model.ndm");
    report_cmd->add_option("--out", report_o.out, "output directory")->required();

    for (auto* sub : app.get_subcommands({})) {
        sub->add_option("--config", "flat key = value config file; explicit flags override")
            ->type_name("FILE");
        for (auto* opt : sub->get_options())
            if (opt->get_expected_max() == 1 && !opt->get_lnames().empty())
                opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }

    try {
        std::vector<std::string> args = expand_config_args(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
        if (plan_cmd->parsed()) return run_plan(plan);
        if (synth_cmd->parsed()) return run_synth(synth);
        if (resample_cmd->parsed()) return run_resample(resample);
        if (transform_cmd->parsed()) return run_transform(transform);
        if (train_cmd->parsed()) return run_train(train_o);
        if (reduce_cmd->parsed()) return run_reduce(reduce_o);
        if (eval_cmd->parsed()) return run_eval(eval_o);
        if (report_cmd->parsed()) return run_report(report_o);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
