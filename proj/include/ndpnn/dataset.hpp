#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ndpnn/errors.hpp"
#include "ndpnn/rng.hpp"
#include "ndpnn/tensor.hpp"

namespace ndpnn {

struct ManifestEntry {
    std::string id;
    std::string path;
    std::string label;
    int height = 0;
    int width = 0;
    std::string split = "train"; // "train" or "test"
};

/// Labeled image inventory. The class catalog is the sorted set of labels.
struct DatasetManifest {
    std::vector<ManifestEntry> entries;

    std::vector<std::string> classes() const {
        std::set<std::string> s;
        for (const auto& e : entries) s.insert(e.label);
        return {s.begin(), s.end()};
    }

    void validate() const {
        std::set<std::string> ids;
        for (const auto& e : entries) {
            if (!ids.insert(e.id).second)
                throw std::invalid_argument("manifest: duplicate id '" + e.id + "'");
            if (e.height < 1 || e.width < 1)
                throw std::invalid_argument("manifest: non-positive size for id '" + e.id + "'");
            if (e.split != "train" && e.split != "test")
                throw std::invalid_argument("manifest: split must be train or test, got '" +
                                            e.split + "'");
        }
    }
};

// CSV with header id,path,label,height,width,split; UTF-8, LF line endings.
// Fields never contain commas by construction.

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw format_error("manifest: cannot open for writing: " + path.string());
    os << "id,path,label,height,width,split\n";
    for (const auto& e : m.entries)
        os << e.id << ',' << e.path << ',' << e.label << ',' << e.height << ',' << e.width << ','
           << e.split << '\n';
    if (!os) throw format_error("manifest: write failed");
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error("manifest: cannot open: " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw format_error("manifest: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "id,path,label,height,width,split")
        throw format_error("manifest: unexpected header '" + line + "'");
    DatasetManifest m;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) f.push_back(field);
        if (f.size() != 6) throw format_error("manifest: malformed row '" + line + "'");
        ManifestEntry e;
        e.id = f[0];
        e.path = f[1];
        e.label = f[2];
        try {
            e.height = std::stoi(f[3]);
            e.width = std::stoi(f[4]);
        } catch (...) {
            throw format_error("manifest: bad size in row '" + line + "'");
        }
        e.split = f[5];
        m.entries.push_back(std::move(e));
    }
    m.validate();
    return m;
}

/// Equal-width height bins over the observed [min, max]; the bin of a value
/// is clamped into [0, bins-1] so the maximum lands in the last bin.
struct SizeBins {
    double lo = 0.0, hi = 0.0;
    int count = 1;

    int bin_of(double height) const {
        if (hi <= lo) return 0;
        const int b = static_cast<int>((height - lo) / (hi - lo) * count);
        return std::clamp(b, 0, count - 1);
    }

    std::vector<double> edges() const {
        std::vector<double> e;
        for (int i = 0; i <= count; ++i) e.push_back(lo + (hi - lo) * i / count);
        return e;
    }
};

inline SizeBins make_size_bins(const DatasetManifest& m, int bins) {
    if (bins < 1) throw std::invalid_argument("size bins: need at least one bin");
    SizeBins sb;
    sb.count = bins;
    if (m.entries.empty()) return sb;
    sb.lo = sb.hi = m.entries.front().height;
    for (const auto& e : m.entries) {
        sb.lo = std::min(sb.lo, static_cast<double>(e.height));
        sb.hi = std::max(sb.hi, static_cast<double>(e.height));
    }
    return sb;
}

struct SplitDistribution {
    std::string split;
    std::size_t count = 0;
    bool empty = false;
    std::vector<double> class_freq;                 // per class, sums to 1 unless empty
    std::vector<std::vector<std::size_t>> size_hist; // [class][bin]
};

struct DistributionReport {
    std::vector<std::string> classes;
    std::vector<double> bin_edges;
    std::vector<SplitDistribution> splits; // train, test
};

inline DistributionReport distribution_report(const DatasetManifest& m, int bins = 8) {
    if (m.entries.empty()) throw std::invalid_argument("distribution_report: empty manifest");
    DistributionReport rep;
    rep.classes = m.classes();
    const SizeBins sb = make_size_bins(m, bins);
    rep.bin_edges = sb.edges();
    std::map<std::string, std::size_t> class_index;
    for (std::size_t i = 0; i < rep.classes.size(); ++i) class_index[rep.classes[i]] = i;

    for (const char* split : {"train", "test"}) {
        SplitDistribution d;
        d.split = split;
        d.class_freq.assign(rep.classes.size(), 0.0);
        d.size_hist.assign(rep.classes.size(), std::vector<std::size_t>(sb.count, 0));
        for (const auto& e : m.entries) {
            if (e.split != split) continue;
            ++d.count;
            const std::size_t c = class_index[e.label];
            d.class_freq[c] += 1.0;
            d.size_hist[c][static_cast<std::size_t>(sb.bin_of(e.height))] += 1;
        }
        if (d.count == 0) {
            d.empty = true;
        } else {
            for (double& f : d.class_freq) f /= static_cast<double>(d.count);
        }
        rep.splits.push_back(std::move(d));
    }
    return rep;
}

inline std::string format_distribution_report(const DistributionReport& rep) {
    std::ostringstream os;
    os << "bin edges:";
    for (double e : rep.bin_edges) os << ' ' << e;
    os << '\n';
    for (const auto& d : rep.splits) {
        os << "split " << d.split << " (" << d.count << " entries)";
        if (d.empty) {
            os << " [EMPTY]\n";
            continue;
        }
        os << '\n';
        for (std::size_t c = 0; c < rep.classes.size(); ++c) {
            os << "  " << rep.classes[c] << ": " << d.class_freq[c] << " hist";
            for (std::size_t b : d.size_hist[c]) os << ' ' << b;
            os << '\n';
        }
    }
    return os.str();
}

struct ResplitResult {
    DatasetManifest manifest;
    std::vector<std::string> warnings;
};

/// Redistributes entries into train/test so both splits match the whole
/// dataset's class and size-per-class distributions. Within every
/// (class x size-bin) cell the entries are shuffled (seeded) and split at
/// train_ratio; per-cell train counts are apportioned by largest remainder
/// so the overall train fraction stays within one entry of the target and
/// small cells still contribute to test when possible.
inline ResplitResult stratified_resplit(const DatasetManifest& manifest, double train_ratio,
                                        int size_bins, std::uint64_t seed) {
    if (!(train_ratio > 0.0 && train_ratio < 1.0))
        throw std::invalid_argument("resplit: train ratio must lie in (0, 1)");
    if (manifest.entries.empty()) throw std::invalid_argument("resplit: empty manifest");
    manifest.validate();

    const auto classes = manifest.classes();
    std::map<std::string, std::size_t> class_index;
    for (std::size_t i = 0; i < classes.size(); ++i) class_index[classes[i]] = i;
    const SizeBins sb = make_size_bins(manifest, size_bins);

    // cell key = class_index * bins + bin
    const std::size_t n_cells = classes.size() * static_cast<std::size_t>(sb.count);
    std::vector<std::vector<std::size_t>> cells(n_cells);
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& e = manifest.entries[i];
        const std::size_t key = class_index[e.label] * static_cast<std::size_t>(sb.count) +
                                static_cast<std::size_t>(sb.bin_of(e.height));
        cells[key].push_back(i);
    }

    // Largest-remainder apportionment of train seats across cells.
    const auto total = static_cast<double>(manifest.entries.size());
    const auto target = static_cast<std::size_t>(std::llround(train_ratio * total));
    std::vector<std::size_t> train_count(n_cells, 0);
    std::vector<std::pair<double, std::size_t>> remainders; // (-fraction, cell)
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < n_cells; ++c) {
        const double quota = train_ratio * static_cast<double>(cells[c].size());
        train_count[c] = static_cast<std::size_t>(std::floor(quota));
        assigned += train_count[c];
        if (!cells[c].empty()) remainders.emplace_back(-(quota - std::floor(quota)), c);
    }
    std::sort(remainders.begin(), remainders.end()); // biggest remainder first, ties by cell index
    for (std::size_t i = 0; i < remainders.size() && assigned < target; ++i) {
        const std::size_t c = remainders[i].second;
        if (train_count[c] < cells[c].size()) {
            ++train_count[c];
            ++assigned;
        }
    }

    ResplitResult out;
    out.manifest = manifest;
    Rng rng(seed);
    for (std::size_t c = 0; c < n_cells; ++c) {
        if (cells[c].empty()) continue;
        Rng cell_rng = rng.fork(c);
        cell_rng.shuffle(cells[c]);
        for (std::size_t k = 0; k < cells[c].size(); ++k)
            out.manifest.entries[cells[c][k]].split = k < train_count[c] ? "train" : "test";
        if (train_count[c] == cells[c].size()) {
            const std::size_t cls = c / static_cast<std::size_t>(sb.count);
            out.warnings.push_back("cell " + classes[cls] + "/bin" +
                                   std::to_string(c % static_cast<std::size_t>(sb.count)) +
                                   " too small to contribute to test; kept wholly in train");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic variable-size dataset
// ---------------------------------------------------------------------------

struct SynthClassSpec {
    std::string label;
    int size_min = 0;
    int size_max = 0;
};

struct SynthSpec {
    std::vector<SynthClassSpec> classes;
    std::size_t count = 0;   // total images, spread evenly over classes
    std::uint64_t seed = 0;
    int channels = 1;        // 1 or 3
};

struct SynthImage {
    ManifestEntry entry;
    Tensor<float> image; // (C, H, W) in [0, 1]
};

/// Square image k with a per-class oriented-stripe signature (angle and
/// frequency step with the class index) plus per-image phase and mild noise.
/// Deterministic: image k is generated from fork(seed, k) regardless of
/// generation order, so batches can be produced image by image.
inline SynthImage synth_image(const SynthSpec& spec, std::size_t k) {
    if (spec.classes.empty()) throw std::invalid_argument("synth: need at least one class");
    if (spec.channels != 1 && spec.channels != 3)
        throw std::invalid_argument("synth: channels must be 1 or 3");
    const std::size_t n_classes = spec.classes.size();
    const std::size_t cls = k % n_classes;
    const auto& cs = spec.classes[cls];
    if (cs.size_min < 8 || cs.size_max < cs.size_min)
        throw std::invalid_argument("synth: bad size range for class " + cs.label);

    Rng rng = Rng(spec.seed).fork(k);
    const int size = static_cast<int>(rng.uniform_int(cs.size_min, cs.size_max));

    const double angle = 3.14159265358979323846 * static_cast<double>(cls) / n_classes;
    const double freq = 6.0 + 2.0 * static_cast<double>(cls);
    const double phase = rng.uniform(0.0, 6.28318530717958647692);
    const double cx = std::cos(angle), sx = std::sin(angle);

    SynthImage si;
    si.image = Tensor<float>({static_cast<std::size_t>(spec.channels),
                              static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double t = (cx * x + sx * y) / size;
            const double band = std::sin(6.28318530717958647692 * freq * t + phase);
            const double noise = rng.uniform(-0.05, 0.05);
            const double v = std::clamp(0.5 + 0.4 * band + noise, 0.0, 1.0);
            for (int c = 0; c < spec.channels; ++c) {
                // tint channels slightly so RGB images stay informative
                const double cv = std::clamp(v * (1.0 - 0.08 * c), 0.0, 1.0);
                si.image(c, y, x) = static_cast<float>(cv);
            }
        }

    std::ostringstream id;
    id << cs.label << '_' << k;
    si.entry.id = id.str();
    si.entry.path = id.str() + ".png";
    si.entry.label = cs.label;
    si.entry.height = size;
    si.entry.width = size;
    si.entry.split = "train";
    return si;
}

inline std::vector<SynthImage> synth_dataset(const SynthSpec& spec) {
    std::vector<SynthImage> out;
    out.reserve(spec.count);
    for (std::size_t k = 0; k < spec.count; ++k) out.push_back(synth_image(spec, k));
    return out;
}

} // namespace ndpnn
