#include "dynimp/data_model.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dynimp/rng.hpp"

namespace dynimp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') {
            quoted = !quoted;
        } else if (ch == ',' && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(trim(cur));
    return out;
}

bool is_missing_token(const std::string& s) {
    if (s.empty()) return true;
    std::string lower;
    for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return lower == "nan";
}

int modal_label(const std::vector<int>& counts) {
    int best = -1;
    int best_count = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] > best_count) {  // strict: ties keep the smaller id
            best = static_cast<int>(i);
            best_count = counts[i];
        }
    }
    return best;
}

std::string join(const std::vector<std::string>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ", ";
        out += xs[i];
    }
    return out;
}

}  // namespace

std::string to_string(ScalingMode mode) {
    switch (mode) {
        case ScalingMode::none: return "none";
        case ScalingMode::minmax: return "minmax";
        case ScalingMode::zscore: return "zscore";
    }
    return "none";
}

ScalingMode parse_scaling_mode(const std::string& s) {
    if (s == "none") return ScalingMode::none;
    if (s == "minmax") return ScalingMode::minmax;
    if (s == "zscore") return ScalingMode::zscore;
    throw std::invalid_argument("unknown scaling mode '" + s + "' (expected minmax | zscore)");
}

double ScalingParams::scale(std::size_t f, double v) const {
    switch (mode) {
        case ScalingMode::none: return v;
        case ScalingMode::minmax: return constant[f] ? 0.5 : (v - location[f]) / spread[f];
        case ScalingMode::zscore: return constant[f] ? 0.0 : (v - location[f]) / spread[f];
    }
    return v;
}

double ScalingParams::unscale(std::size_t f, double v) const {
    if (mode == ScalingMode::none) return v;
    if (constant[f]) return location[f];
    return v * spread[f] + location[f];
}

void Dataset::validate() const {
    const auto F = num_features();
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto& w = windows[i];
        if (w.values.rows() != window_length || w.values.cols() != F) {
            throw std::invalid_argument("window " + std::to_string(i) + " is " + std::to_string(w.values.rows()) + "x" +
                                        std::to_string(w.values.cols()) + ", dataset declares " +
                                        std::to_string(window_length) + "x" + std::to_string(F));
        }
        require_same_shape(w.values, w.mask, "Dataset::validate");
        if (w.label_id < 0 || static_cast<std::size_t>(w.label_id) >= num_labels()) {
            throw std::invalid_argument("window " + std::to_string(i) + " has label " + std::to_string(w.label_id) +
                                        " outside [0, " + std::to_string(num_labels()) + ")");
        }
    }
}

std::vector<SensorFrame> bin_frames(const std::vector<SensorFrame>& samples, std::int64_t bin_seconds,
                                    std::size_t num_labels) {
    if (samples.empty()) return {};
    if (bin_seconds <= 0) throw std::invalid_argument("bin_seconds must be positive");
    const auto F = samples.front().features.size();
    const auto t0 = samples.front().timestamp;
    const auto last_bin = static_cast<std::size_t>((samples.back().timestamp - t0) / bin_seconds);

    std::vector<SensorFrame> frames(last_bin + 1);
    std::vector<std::vector<double>> sums(frames.size(), std::vector<double>(F, 0.0));
    std::vector<std::vector<int>> counts(frames.size(), std::vector<int>(F, 0));
    std::vector<std::vector<int>> votes(frames.size(), std::vector<int>(num_labels, 0));

    for (const auto& s : samples) {
        const auto b = static_cast<std::size_t>((s.timestamp - t0) / bin_seconds);
        for (std::size_t f = 0; f < F; ++f) {
            if (s.observed[f]) {
                sums[b][f] += s.features[f];
                ++counts[b][f];
            }
        }
        if (s.label_id) ++votes[b][static_cast<std::size_t>(*s.label_id)];
    }
    for (std::size_t b = 0; b < frames.size(); ++b) {
        auto& fr = frames[b];
        fr.timestamp = t0 + static_cast<std::int64_t>(b) * bin_seconds;
        fr.features.assign(F, kNaN);
        fr.observed.assign(F, 0);
        for (std::size_t f = 0; f < F; ++f) {
            if (counts[b][f] > 0) {
                fr.features[f] = sums[b][f] / counts[b][f];
                fr.observed[f] = 1;
            }
        }
        if (int m = modal_label(votes[b]); m >= 0) fr.label_id = m;
    }
    return frames;
}

std::vector<Window> build_windows(const std::vector<SensorFrame>& frames, std::size_t T, std::size_t stride) {
    if (T < 2) throw std::invalid_argument("window length must be >= 2");
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");
    std::vector<Window> out;
    if (frames.size() < T) return out;
    const auto F = frames.front().features.size();
    std::size_t num_labels = 0;
    for (const auto& fr : frames) {
        if (fr.label_id) num_labels = std::max(num_labels, static_cast<std::size_t>(*fr.label_id) + 1);
    }
    const auto count = expected_window_count(frames.size(), T, stride);
    out.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
        const auto start = w * stride;
        Window win{Tensor2(T, F, kNaN), MaskMatrix(T, F, false), 0};
        std::vector<int> votes(num_labels, 0);
        for (std::size_t t = 0; t < T; ++t) {
            const auto& fr = frames[start + t];
            if (fr.features.size() != F) {
                throw std::invalid_argument("frame " + std::to_string(start + t) + " has " +
                                            std::to_string(fr.features.size()) + " features, expected " +
                                            std::to_string(F));
            }
            for (std::size_t f = 0; f < F; ++f) {
                if (fr.observed[f]) {
                    win.values(t, f) = fr.features[f];
                    win.mask.set(t, f, true);
                }
            }
            if (fr.label_id) ++votes[static_cast<std::size_t>(*fr.label_id)];
        }
        const int label = modal_label(votes);
        if (label < 0) {
            throw std::invalid_argument("window starting at frame " + std::to_string(start) + " has no labeled frames");
        }
        win.label_id = label;
        out.push_back(std::move(win));
    }
    return out;
}

Dataset ingest_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open CSV file '" + path.string() + "'");

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("CSV file '" + path.string() + "' is empty");
    const auto header = split_csv_line(line);

    auto find_col = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw std::runtime_error("CSV header has no column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto ts_col = find_col(schema.timestamp_column);
    const auto label_col = find_col(schema.label_column);
    std::vector<std::size_t> feat_cols;
    std::vector<std::string> feature_names;
    if (schema.feature_columns.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i != ts_col && i != label_col) {
                feat_cols.push_back(i);
                feature_names.push_back(header[i]);
            }
        }
    } else {
        for (const auto& name : schema.feature_columns) {
            feat_cols.push_back(find_col(name));
            feature_names.push_back(name);
        }
    }
    if (feat_cols.empty()) throw std::runtime_error("CSV has no feature columns");

    struct RawRow {
        std::int64_t ts;
        std::vector<double> values;
        std::vector<std::uint8_t> observed;
        std::string label;
        std::size_t line;
    };
    std::vector<RawRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()));
        }
        RawRow row{0, {}, {}, cells[label_col], line_no};
        const auto& ts = cells[ts_col];
        auto [p, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), row.ts);
        if (ec != std::errc() || p != ts.data() + ts.size()) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": malformed timestamp '" + ts + "'");
        }
        for (auto c : feat_cols) {
            const auto& cell = cells[c];
            if (is_missing_token(cell)) {
                row.values.push_back(kNaN);
                row.observed.push_back(0);
                continue;
            }
            double v = 0.0;
            auto [q, ec2] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec2 != std::errc() || q != cell.data() + cell.size() || !std::isfinite(v)) {
                throw std::runtime_error("line " + std::to_string(line_no) + ": malformed value '" + cell +
                                         "' in column '" + header[c] + "'");
            }
            row.values.push_back(v);
            row.observed.push_back(1);
        }
        if (!rows.empty() && row.ts <= rows.back().ts) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": timestamp " + std::to_string(row.ts) +
                                     " does not increase");
        }
        rows.push_back(std::move(row));
    }

    std::vector<std::string> labels = schema.known_labels;
    if (labels.empty()) {
        std::set<std::string> seen;
        for (const auto& r : rows) {
            if (!r.label.empty()) seen.insert(r.label);
        }
        labels.assign(seen.begin(), seen.end());
    }
    std::map<std::string, int> label_index;
    for (std::size_t i = 0; i < labels.size(); ++i) label_index[labels[i]] = static_cast<int>(i);

    std::vector<SensorFrame> samples;
    samples.reserve(rows.size());
    for (auto& r : rows) {
        SensorFrame s{r.ts, std::move(r.values), std::move(r.observed), std::nullopt};
        if (!r.label.empty()) {
            auto it = label_index.find(r.label);
            if (it == label_index.end()) {
                throw std::runtime_error("line " + std::to_string(r.line) + ": unknown label '" + r.label +
                                         "'; known labels: " + join(labels));
            }
            s.label_id = it->second;
        }
        samples.push_back(std::move(s));
    }

    const auto T = schema.window_length;
    const auto frames = bin_frames(samples, schema.bin_seconds, labels.size());
    if (frames.size() < T) {
        throw std::runtime_error("CSV '" + path.string() + "' yields " + std::to_string(frames.size()) +
                                 " frames, fewer than the window length " + std::to_string(T) + ": empty dataset");
    }
    Dataset ds;
    ds.window_length = T;
    ds.feature_names = std::move(feature_names);
    ds.label_names = std::move(labels);
    ds.windows = build_windows(frames, T, schema.stride == 0 ? T : schema.stride);
    ds.validate();
    return ds;
}

ScalingParams fit_scaling(const Dataset& dataset, ScalingMode mode) {
    return fit_scaling(dataset.windows, dataset.feature_names, mode);
}

ScalingParams fit_scaling(const std::vector<Window>& windows, const std::vector<std::string>& feature_names,
                          ScalingMode mode) {
    const auto F = feature_names.size();
    ScalingParams p;
    p.mode = mode;
    p.location.assign(F, 0.0);
    p.spread.assign(F, 1.0);
    p.constant.assign(F, 0);
    if (mode == ScalingMode::none) return p;

    std::vector<double> lo(F, std::numeric_limits<double>::infinity());
    std::vector<double> hi(F, -std::numeric_limits<double>::infinity());
    std::vector<double> sum(F, 0.0);
    std::vector<std::size_t> n(F, 0);
    for (const auto& w : windows) {
        for (std::size_t t = 0; t < w.length(); ++t) {
            for (std::size_t f = 0; f < F; ++f) {
                if (!w.mask(t, f)) continue;
                const double v = w.values(t, f);
                lo[f] = std::min(lo[f], v);
                hi[f] = std::max(hi[f], v);
                sum[f] += v;
                ++n[f];
            }
        }
    }
    for (std::size_t f = 0; f < F; ++f) {
        if (n[f] == 0) throw std::invalid_argument("feature '" + feature_names[f] + "' has no observed cells");
    }
    if (mode == ScalingMode::minmax) {
        for (std::size_t f = 0; f < F; ++f) {
            p.location[f] = lo[f];
            p.spread[f] = hi[f] - lo[f];
            if (p.spread[f] <= 0.0) {
                p.constant[f] = 1;
                p.spread[f] = 0.0;
            }
        }
        return p;
    }
    std::vector<double> ss(F, 0.0);
    for (std::size_t f = 0; f < F; ++f) p.location[f] = sum[f] / static_cast<double>(n[f]);
    for (const auto& w : windows) {
        for (std::size_t t = 0; t < w.length(); ++t) {
            for (std::size_t f = 0; f < F; ++f) {
                if (!w.mask(t, f)) continue;
                const double d = w.values(t, f) - p.location[f];
                ss[f] += d * d;
            }
        }
    }
    for (std::size_t f = 0; f < F; ++f) {
        p.spread[f] = std::sqrt(ss[f] / static_cast<double>(n[f]));
        if (p.spread[f] <= 0.0) {
            p.constant[f] = 1;
            p.spread[f] = 0.0;
        }
    }
    return p;
}

void apply_scaling(Window& w, const ScalingParams& params, bool clip_unit) {
    for (std::size_t t = 0; t < w.length(); ++t) {
        for (std::size_t f = 0; f < w.features(); ++f) {
            if (!w.mask(t, f)) continue;
            double v = params.scale(f, w.values(t, f));
            if (clip_unit && params.mode == ScalingMode::minmax) v = std::clamp(v, 0.0, 1.0);
            w.values(t, f) = v;
        }
    }
}

void apply_scaling(Dataset& dataset, const ScalingParams& params, bool clip_unit) {
    if (dataset.scaling.mode != ScalingMode::none) throw std::logic_error("dataset is already scaled");
    if (params.location.size() != dataset.num_features()) {
        throw std::invalid_argument("scaling parameters cover " + std::to_string(params.location.size()) +
                                    " features, dataset has " + std::to_string(dataset.num_features()));
    }
    for (auto& w : dataset.windows) apply_scaling(w, params, clip_unit);
    dataset.scaling = params;
}

void remove_scaling(Dataset& dataset) {
    const auto& p = dataset.scaling;
    if (p.mode == ScalingMode::none) return;
    for (auto& w : dataset.windows) {
        for (std::size_t t = 0; t < w.length(); ++t) {
            for (std::size_t f = 0; f < w.features(); ++f) {
                if (w.mask(t, f)) w.values(t, f) = p.unscale(f, w.values(t, f));
            }
        }
    }
    dataset.scaling = ScalingParams{};
}

std::vector<double> observed_feature_means(const std::vector<Window>& windows) {
    if (windows.empty()) return {};
    const auto F = windows.front().features();
    std::vector<double> sum(F, 0.0);
    std::vector<std::size_t> n(F, 0);
    for (const auto& w : windows) {
        for (std::size_t t = 0; t < w.length(); ++t) {
            for (std::size_t f = 0; f < F; ++f) {
                if (w.mask(t, f)) {
                    sum[f] += w.values(t, f);
                    ++n[f];
                }
            }
        }
    }
    for (std::size_t f = 0; f < F; ++f) sum[f] = n[f] ? sum[f] / static_cast<double>(n[f]) : 0.0;
    return sum;
}

std::pair<Dataset, GroundTruthStore> inject_missingness(const Dataset& dataset, double level, std::uint64_t seed) {
    if (!(level >= 0.0 && level < 1.0)) {
        throw std::invalid_argument("missingness level must be in [0, 1), got " + std::to_string(level));
    }
    Dataset out = dataset;
    GroundTruthStore truth;
    Rng rng(derive_seed(seed, {0x6d697373ULL}));
    for (std::size_t i = 0; i < out.windows.size(); ++i) {
        auto& w = out.windows[i];
        for (std::size_t t = 0; t < w.length(); ++t) {
            for (std::size_t f = 0; f < w.features(); ++f) {
                if (!w.mask(t, f)) continue;
                if (rng.uniform() < level) {
                    truth.push_back({i, t, f, w.values(t, f)});
                    w.mask.set(t, f, false);
                    w.values(t, f) = kNaN;
                }
            }
        }
    }
    return {std::move(out), std::move(truth)};
}

namespace {

const std::array<std::string, 4> kMovements = {"LYING_DOWN", "SITTING", "FIX_walking", "others"};
const std::array<std::string, 4> kLocations = {"phone_in_pocket", "phone_in_hand", "phone_in_bag", "phone_on_table"};

// Movements differ mainly in latent volatility; the phone location adds a level
// shift that is a nuisance for movement labels. Regimes are sticky relative to
// the 24-minute window so most windows carry a single label.
constexpr std::array<double, 4> kRegimeMean = {-0.3, -0.105, 0.105, 0.3};
constexpr std::array<double, 4> kRegimeVol = {0.1, 0.5, 0.3, 0.8};
constexpr std::array<double, 4> kLocationShift = {-0.4, -0.4 / 3, 0.4 / 3, 0.4};
constexpr double kAr = 0.3;
constexpr double kRegimeSwitch = 1.0 / 200.0;
constexpr double kLocationSwitch = 1.0 / 400.0;

}  // namespace

std::vector<std::vector<SensorFrame>> generate_synthetic_frames(const SyntheticSpec& spec) {
    if (spec.features < 2) throw std::invalid_argument("synthetic data needs at least 2 features");
    if (!(spec.coupling >= 0.0 && spec.coupling <= 1.0)) {
        throw std::invalid_argument("coupling must be in [0, 1]");
    }
    const auto F = spec.features;
    Rng channel_rng(derive_seed(spec.seed, {0x6368616eULL}));
    std::vector<double> gain(F), offset(F);
    for (std::size_t f = 0; f < F; ++f) {
        gain[f] = channel_rng.uniform(0.5, 2.0);
        offset[f] = channel_rng.uniform(-3.0, 3.0);
    }
    const double c = spec.coupling;
    const double own = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double innov = std::sqrt(1.0 - kAr * kAr);

    std::vector<std::vector<SensorFrame>> users(spec.users);
    for (std::size_t u = 0; u < spec.users; ++u) {
        Rng rng(derive_seed(spec.seed, {0x75736572ULL, u}));
        auto regime = static_cast<std::size_t>(rng.below(4));
        auto location = static_cast<std::size_t>(rng.below(4));
        double latent = rng.normal();
        std::vector<double> noise(F);
        for (auto& e : noise) e = rng.normal();

        auto& frames = users[u];
        frames.reserve(spec.minutes);
        for (std::size_t m = 0; m < spec.minutes; ++m) {
            if (m > 0) {
                if (rng.uniform() < kRegimeSwitch) regime = (regime + 1 + rng.below(3)) % 4;
                if (rng.uniform() < kLocationSwitch) location = (location + 1 + rng.below(3)) % 4;
                latent = kAr * latent + innov * rng.normal();
                for (auto& e : noise) e = kAr * e + innov * rng.normal();
            }
            const double s = kRegimeMean[regime] + kLocationShift[location] + kRegimeVol[regime] * latent;
            SensorFrame fr;
            fr.timestamp = static_cast<std::int64_t>(u) * 10'000'000 + static_cast<std::int64_t>(m) * 60;
            fr.features.resize(F);
            fr.observed.assign(F, 1);
            for (std::size_t f = 0; f < F; ++f) fr.features[f] = gain[f] * (c * s + own * noise[f]) + offset[f];
            fr.label_id = static_cast<int>(regime * 4 + location);
            frames.push_back(std::move(fr));
        }
    }
    return users;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    Dataset ds;
    ds.window_length = spec.window_length;
    for (std::size_t f = 0; f < spec.features; ++f) ds.feature_names.push_back("ch" + std::to_string(f));
    for (const auto& m : kMovements) {
        for (const auto& l : kLocations) ds.label_names.push_back(m + "|" + l);
    }
    const auto stride = spec.stride == 0 ? spec.window_length : spec.stride;
    for (const auto& frames : generate_synthetic_frames(spec)) {
        auto ws = build_windows(frames, spec.window_length, stride);
        for (auto& w : ws) ds.windows.push_back(std::move(w));
    }
    ds.validate();
    return ds;
}

std::string movement_of(const std::string& combined_label) {
    return combined_label.substr(0, combined_label.find('|'));
}

Dataset collapse_to_movement(const Dataset& dataset) {
    Dataset out = dataset;
    out.label_names.clear();
    std::vector<int> remap(dataset.label_names.size());
    for (std::size_t i = 0; i < dataset.label_names.size(); ++i) {
        const auto m = movement_of(dataset.label_names[i]);
        auto it = std::find(out.label_names.begin(), out.label_names.end(), m);
        if (it == out.label_names.end()) {
            out.label_names.push_back(m);
            it = out.label_names.end() - 1;
        }
        remap[i] = static_cast<int>(it - out.label_names.begin());
    }
    for (auto& w : out.windows) w.label_id = remap[static_cast<std::size_t>(w.label_id)];
    return out;
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson_correlation: bad lengths");
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0 || sbb <= 0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace dynimp
