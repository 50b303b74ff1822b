#include "dynimp/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dynimp {

std::string format_hex(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
    if (ec != std::errc()) throw std::runtime_error("format_hex: conversion failed");
    return std::string(buf, p);
}

double parse_hex(const std::string& token) {
    double v = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    auto [p, ec] = std::from_chars(first, last, v, std::chars_format::hex);
    if (ec != std::errc() || p != last) throw std::runtime_error("malformed hex float '" + token + "'");
    return v;
}

namespace {

class Reader {
public:
    explicit Reader(std::istream& is) : is_(is) {}

    std::string line() {
        std::string s;
        if (!std::getline(is_, s)) throw std::runtime_error("unexpected end of file after line " + std::to_string(n_));
        ++n_;
        if (!s.empty() && s.back() == '\r') s.pop_back();
        return s;
    }

    /// Reads "key rest" and returns rest.
    std::string field(const std::string& key) {
        const auto s = line();
        if (s.rfind(key, 0) != 0 || (s.size() > key.size() && s[key.size()] != ' ')) {
            fail("expected '" + key + "', got '" + s + "'");
        }
        return s.size() > key.size() ? s.substr(key.size() + 1) : std::string{};
    }

    std::size_t count(const std::string& key) {
        const auto v = field(key);
        std::size_t n = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
        if (ec != std::errc() || p != v.data() + v.size()) fail("bad count for '" + key + "'");
        return n;
    }

    std::uint64_t u64(const std::string& key) {
        const auto v = field(key);
        std::uint64_t n = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
        if (ec != std::errc() || p != v.data() + v.size()) fail("bad integer for '" + key + "'");
        return n;
    }

    double real(const std::string& key) { return parse_hex(field(key)); }

    [[noreturn]] void fail(const std::string& msg) const {
        throw std::runtime_error("line " + std::to_string(n_) + ": " + msg);
    }

private:
    std::istream& is_;
    std::size_t n_ = 0;
};

std::vector<std::string> tokens(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string t;
    while (in >> t) out.push_back(t);
    return out;
}

void check_header(Reader& r, const std::string& magic, int version) {
    const auto h = tokens(r.line());
    if (h.size() != 2 || h[0] != magic) r.fail("not a " + magic + " file");
    if (h[1] != std::to_string(version)) {
        r.fail("unsupported " + magic + " version " + h[1] + " (this build reads " + std::to_string(version) + ")");
    }
}

void write_scaling(std::ostream& os, const ScalingParams& s) {
    os << "scaling " << to_string(s.mode) << '\n';
    if (s.mode == ScalingMode::none) return;
    for (std::size_t f = 0; f < s.location.size(); ++f) {
        os << "scale " << format_hex(s.location[f]) << ' ' << format_hex(s.spread[f]) << ' '
           << static_cast<int>(s.constant[f]) << '\n';
    }
}

ScalingParams read_scaling(Reader& r, std::size_t F) {
    ScalingParams s;
    s.mode = parse_scaling_mode(r.field("scaling"));
    if (s.mode == ScalingMode::none) return s;
    s.location.resize(F);
    s.spread.resize(F);
    s.constant.resize(F);
    for (std::size_t f = 0; f < F; ++f) {
        const auto t = tokens(r.field("scale"));
        if (t.size() != 3) r.fail("scale line needs 3 fields");
        s.location[f] = parse_hex(t[0]);
        s.spread[f] = parse_hex(t[1]);
        s.constant[f] = t[2] == "1" ? 1 : 0;
    }
    return s;
}

void write_tensor(std::ostream& os, const std::string& name, const Tensor2& t) {
    os << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.cols(); ++c) os << (c ? " " : "") << format_hex(t(r, c));
        os << '\n';
    }
}

void read_tensor(Reader& r, const std::string& name, Tensor2& into) {
    const auto h = tokens(r.field("tensor"));
    if (h.size() != 3 || h[0] != name) r.fail("expected tensor '" + name + "'");
    const auto rows = std::stoul(h[1]);
    const auto cols = std::stoul(h[2]);
    if (rows != into.rows() || cols != into.cols()) {
        r.fail("tensor '" + name + "' is " + h[1] + "x" + h[2] + ", expected " + std::to_string(into.rows()) + "x" +
               std::to_string(into.cols()));
    }
    for (std::size_t i = 0; i < rows; ++i) {
        const auto vals = tokens(r.line());
        if (vals.size() != cols) r.fail("tensor '" + name + "' row has wrong length");
        for (std::size_t c = 0; c < cols; ++c) into(i, c) = parse_hex(vals[c]);
    }
}

}  // namespace

void write_dataset(std::ostream& os, const Dataset& ds) {
    ds.validate();
    const auto F = ds.num_features();
    os << "dynimp-dataset " << kDatasetFormatVersion << '\n';
    os << "window_length " << ds.window_length << '\n';
    os << "features " << F << '\n';
    for (const auto& n : ds.feature_names) os << "feature " << n << '\n';
    os << "labels " << ds.num_labels() << '\n';
    for (const auto& n : ds.label_names) os << "label " << n << '\n';
    write_scaling(os, ds.scaling);
    os << "windows " << ds.windows.size() << '\n';
    for (const auto& w : ds.windows) {
        os << "window " << w.label_id << '\n';
        for (std::size_t t = 0; t < w.length(); ++t) {
            for (std::size_t f = 0; f < F; ++f) {
                os << (f ? " " : "") << (w.mask(t, f) ? format_hex(w.values(t, f)) : std::string("."));
            }
            os << '\n';
        }
    }
}

Dataset read_dataset(std::istream& is) {
    Reader r(is);
    check_header(r, "dynimp-dataset", kDatasetFormatVersion);
    Dataset ds;
    ds.window_length = r.count("window_length");
    const auto F = r.count("features");
    for (std::size_t f = 0; f < F; ++f) ds.feature_names.push_back(r.field("feature"));
    const auto L = r.count("labels");
    for (std::size_t l = 0; l < L; ++l) ds.label_names.push_back(r.field("label"));
    ds.scaling = read_scaling(r, F);
    const auto N = r.count("windows");
    ds.windows.reserve(N);
    const auto T = ds.window_length;
    for (std::size_t i = 0; i < N; ++i) {
        const auto lab = r.field("window");
        Window w{Tensor2(T, F, std::numeric_limits<double>::quiet_NaN()), MaskMatrix(T, F, false), std::stoi(lab)};
        for (std::size_t t = 0; t < T; ++t) {
            const auto vals = tokens(r.line());
            if (vals.size() != F) r.fail("window row has " + std::to_string(vals.size()) + " cells, expected " + std::to_string(F));
            for (std::size_t f = 0; f < F; ++f) {
                if (vals[f] == ".") continue;
                w.values(t, f) = parse_hex(vals[f]);
                w.mask.set(t, f, true);
            }
        }
        ds.windows.push_back(std::move(w));
    }
    ds.validate();
    return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write dataset file '" + path.string() + "'");
    write_dataset(os, dataset);
    if (!os) throw std::runtime_error("error writing dataset file '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open dataset file '" + path.string() + "'");
    try {
        return read_dataset(is);
    } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
    const auto& m = ckpt.model;
    const auto& c = m.config;
    os << "dynimp-checkpoint " << kCheckpointFormatVersion << '\n';
    os << "features " << m.num_features() << '\n';
    os << "hidden " << m.encoder.hidden_size() << '\n';
    os << "padding " << to_string(c.padding) << '\n';
    os << "neighbors " << c.neighbors << '\n';
    os << "keep_prob " << format_hex(c.keep_prob) << '\n';
    os << "batch " << c.batch << '\n';
    os << "lr " << format_hex(c.adam.lr) << '\n';
    os << "beta1 " << format_hex(c.adam.beta1) << '\n';
    os << "beta2 " << format_hex(c.adam.beta2) << '\n';
    os << "adam_epsilon " << format_hex(c.adam.epsilon) << '\n';
    os << "clip_norm " << format_hex(c.clip_norm) << '\n';
    os << "loss " << to_string(c.loss) << '\n';
    os << "seed " << m.seed << '\n';
    os << "epochs_completed " << m.epochs_completed << '\n';
    os << "feature_means";
    for (double v : m.feature_means) os << ' ' << format_hex(v);
    os << '\n';
    write_scaling(os, ckpt.scaling);
    static const char* names[] = {"encoder.w_input", "encoder.w_recurrent", "encoder.bias", "decoder.weight",
                                  "decoder.bias"};
    const auto ts = m.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) write_tensor(os, names[i], *ts[i]);
    os << "adam_step " << m.optimizer.step << '\n';
    for (std::size_t i = 0; i < ts.size(); ++i) {
        write_tensor(os, std::string("adam.m.") + names[i], m.optimizer.first[i]);
        write_tensor(os, std::string("adam.v.") + names[i], m.optimizer.second[i]);
    }
}

Checkpoint read_checkpoint(std::istream& is) {
    Reader r(is);
    check_header(r, "dynimp-checkpoint", kCheckpointFormatVersion);
    const auto F = r.count("features");
    DynImpConfig c;
    c.hidden = r.count("hidden");
    c.padding = parse_imputer_kind(r.field("padding"));
    c.neighbors = r.count("neighbors");
    c.keep_prob = r.real("keep_prob");
    c.batch = r.count("batch");
    c.adam.lr = r.real("lr");
    c.adam.beta1 = r.real("beta1");
    c.adam.beta2 = r.real("beta2");
    c.adam.epsilon = r.real("adam_epsilon");
    c.clip_norm = r.real("clip_norm");
    c.loss = parse_loss_mode(r.field("loss"));
    c.epochs = 0;
    const auto seed = r.u64("seed");
    Checkpoint ckpt{make_model(F, c, seed), {}};
    auto& m = ckpt.model;
    m.epochs_completed = r.count("epochs_completed");
    const auto means = tokens(r.field("feature_means"));
    if (means.size() != F) r.fail("feature_means needs " + std::to_string(F) + " values");
    for (std::size_t f = 0; f < F; ++f) m.feature_means[f] = parse_hex(means[f]);
    ckpt.scaling = read_scaling(r, F);
    static const char* names[] = {"encoder.w_input", "encoder.w_recurrent", "encoder.bias", "decoder.weight",
                                  "decoder.bias"};
    auto ts = m.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) read_tensor(r, names[i], *ts[i]);
    m.optimizer.step = static_cast<std::int64_t>(r.u64("adam_step"));
    for (std::size_t i = 0; i < ts.size(); ++i) {
        read_tensor(r, std::string("adam.m.") + names[i], m.optimizer.first[i]);
        read_tensor(r, std::string("adam.v.") + names[i], m.optimizer.second[i]);
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
    write_checkpoint(os, ckpt);
    if (!os) throw std::runtime_error("error writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
    try {
        return read_checkpoint(is);
    } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

}  // namespace dynimp
