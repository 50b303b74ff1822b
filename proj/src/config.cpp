#include "dynimp/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include <json.hpp>

namespace dynimp {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

std::string env_name(const std::string& key) {
    std::string out = "DYNIMP_";
    for (char c : key) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    return out;
}

}  // namespace

const std::vector<ConfigKey>& RunConfig::keys() {
    static const std::vector<ConfigKey> k = {
        // data
        {"window_length", "24", "time steps per window (T)"},
        {"stride", "0", "window stride; 0 = window_length"},
        {"bin_seconds", "60", "CSV binning interval in seconds"},
        {"labels_known", "", "comma list of accepted CSV labels; empty = infer"},
        {"scaling", "minmax", "feature scaling: minmax | zscore"},
        {"labels", "movement4", "label set for evaluation: movement4 | combined16"},
        // synthetic generator
        {"users", "4", "synthetic users"},
        {"minutes", "1440", "synthetic minutes per user"},
        {"features", "8", "synthetic feature count (F)"},
        {"coupling", "0.9", "synthetic cross-channel coupling in [0, 1]"},
        // model
        {"padding", "knn", "DynImp padding strategy: zero | mean | interp | knn"},
        {"k", "5", "kNN neighbor count"},
        {"hidden", "32", "LSTM hidden size (H)"},
        {"keep_prob", "0.8", "corruption keep probability p in (0, 1]"},
        {"epochs", "100", "training epochs"},
        {"batch", "32", "mini-batch size"},
        {"lr", "0.001", "Adam learning rate"},
        {"beta1", "0.9", "Adam beta1"},
        {"beta2", "0.999", "Adam beta2"},
        {"adam_epsilon", "1e-8", "Adam epsilon"},
        {"clip_norm", "5", "global gradient-norm clip"},
        {"loss", "bce", "reconstruction loss: bce | mse"},
        {"seed", "1", "seed for synthesis and training"},
        // experiment
        {"methods", "mean,knn,indicator,dynimp-zero,dynimp-mean,dynimp-interp,dynimp-knn", "experiment methods"},
        {"levels", "0.1,0.2,0.3,0.4,0.5,0.6", "injected missingness levels"},
        {"seeds", "1,2,3,4,5,6,7,8,9,10", "experiment seeds"},
        {"train_fraction", "0.8", "stratified train share"},
        {"classifier_iterations", "400", "classifier Adam iterations"},
        {"classifier_lr", "0.05", "classifier learning rate"},
        {"classifier_l2", "0.001", "classifier L2 penalty"},
        {"jobs", "1", "worker threads"},
        // gradient check
        {"grad_check", "false", "run the gradient check before training"},
        {"grad_check_eps", "1e-5", "finite-difference step"},
        {"grad_check_tolerance", "1e-4", "max relative error"},
        {"grad_check_samples", "20", "parameters sampled per instance (0 = all)"},
        {"grad_check_instances", "20", "random instances for the stand-alone check"},
    };
    return k;
}

bool RunConfig::is_key(const std::string& key) {
    const auto& k = keys();
    return std::any_of(k.begin(), k.end(), [&](const ConfigKey& c) { return c.name == key; });
}

RunConfig::RunConfig() {
    for (const auto& k : keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!is_key(key)) throw std::invalid_argument("unknown config key '" + key + "'");
    values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    return it->second;
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument(origin + ":" + std::to_string(n) + ": expected key=value");
        }
        const auto key = trim(line.substr(0, eq));
        if (!is_key(key)) throw std::invalid_argument(origin + ":" + std::to_string(n) + ": unknown key '" + key + "'");
        values_[key] = trim(line.substr(eq + 1));
    }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
    if (path.extension() == ".json") {
        merge_manifest(path);
        return;
    }
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    merge_text(ss.str(), path.string());
}

void RunConfig::merge_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("manifest '" + path.string() + "' is not valid JSON: " + e.what());
    }
    if (!j.contains("config") || !j["config"].is_object()) {
        throw std::runtime_error("manifest '" + path.string() + "' has no config object");
    }
    for (const auto& [key, value] : j["config"].items()) {
        if (!is_key(key)) throw std::invalid_argument("manifest '" + path.string() + "': unknown key '" + key + "'");
        values_[key] = value.get<std::string>();
    }
}

void RunConfig::merge_environment() {
    for (char** e = environ; e && *e; ++e) {
        const std::string entry(*e);
        if (entry.rfind("DYNIMP_", 0) != 0) continue;
        const auto name = entry.substr(0, entry.find('='));
        const auto& k = keys();
        if (std::none_of(k.begin(), k.end(), [&](const ConfigKey& c) { return env_name(c.name) == name; })) {
            throw std::invalid_argument("unknown config key in environment variable " + name);
        }
    }
    for (const auto& k : keys()) {
        if (const char* v = std::getenv(env_name(k.name).c_str())) values_[k.name] = v;
    }
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

std::size_t RunConfig::get_size(const std::string& key) const {
    const auto& s = get(key);
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw std::invalid_argument("config '" + key + "': expected a non-negative integer, got '" + s + "'");
    }
    return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const auto& s = get(key);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw std::invalid_argument("config '" + key + "': expected an integer, got '" + s + "'");
    }
    return v;
}

double RunConfig::get_real(const std::string& key) const {
    const auto& s = get(key);
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw std::invalid_argument("config '" + key + "': expected a number, got '" + s + "'");
    }
    return v;
}

bool RunConfig::get_bool(const std::string& key) const {
    const auto& s = get(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no" || s.empty()) return false;
    throw std::invalid_argument("config '" + key + "': expected true/false, got '" + s + "'");
}

std::vector<std::string> RunConfig::get_strings(const std::string& key) const { return split_list(get(key)); }

std::vector<double> RunConfig::get_reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& t : split_list(get(key))) {
        double v = 0.0;
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc() || p != t.data() + t.size()) {
            throw std::invalid_argument("config '" + key + "': bad number '" + t + "'");
        }
        out.push_back(v);
    }
    return out;
}

std::vector<std::uint64_t> RunConfig::get_u64s(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const auto& t : split_list(get(key))) {
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc() || p != t.data() + t.size()) {
            throw std::invalid_argument("config '" + key + "': bad integer '" + t + "'");
        }
        out.push_back(v);
    }
    return out;
}

ScalingMode RunConfig::scaling_mode() const {
    const auto m = parse_scaling_mode(get("scaling"));
    if (m == ScalingMode::none) throw std::invalid_argument("config 'scaling' must be minmax or zscore");
    return m;
}

DynImpConfig RunConfig::dynimp_config() const {
    DynImpConfig c;
    c.padding = parse_imputer_kind(get("padding"));
    c.neighbors = get_size("k");
    c.hidden = get_size("hidden");
    c.keep_prob = get_real("keep_prob");
    c.epochs = get_size("epochs");
    c.batch = get_size("batch");
    c.adam = AdamHyper{get_real("lr"), get_real("beta1"), get_real("beta2"), get_real("adam_epsilon")};
    c.clip_norm = get_real("clip_norm");
    c.loss = parse_loss_mode(get("loss"));
    return c;
}

ExperimentConfig RunConfig::experiment_config() const {
    ExperimentConfig e;
    e.methods = get_strings("methods");
    e.levels = get_reals("levels");
    e.seeds = get_u64s("seeds");
    e.dynimp = dynimp_config();
    e.classifier = ClassifierHyper{get_size("classifier_iterations"), get_real("classifier_lr"),
                                   get_real("classifier_l2"), 0};
    e.neighbors = get_size("k");
    e.train_fraction = get_real("train_fraction");
    e.scaling = scaling_mode();
    e.labels = parse_label_mode(get("labels"));
    e.jobs = static_cast<int>(get_size("jobs"));
    return e;
}

SyntheticSpec RunConfig::synthetic_spec() const {
    SyntheticSpec s;
    s.users = get_size("users");
    s.minutes = get_size("minutes");
    s.features = get_size("features");
    s.coupling = get_real("coupling");
    s.seed = get_u64("seed");
    s.window_length = get_size("window_length");
    s.stride = get_size("stride");
    return s;
}

CsvSchema RunConfig::csv_schema() const {
    CsvSchema s;
    s.known_labels = get_strings("labels_known");
    s.window_length = get_size("window_length");
    s.stride = get_size("stride");
    s.bin_seconds = static_cast<std::int64_t>(get_size("bin_seconds"));
    return s;
}

void RunConfig::validate() const {
    if (get_size("window_length") < 2) throw std::invalid_argument("config 'window_length' must be >= 2");
    if (get_size("bin_seconds") < 1) throw std::invalid_argument("config 'bin_seconds' must be >= 1");
    const auto syn = synthetic_spec();
    if (syn.features < 2) throw std::invalid_argument("config 'features' must be >= 2");
    if (!(syn.coupling >= 0.0 && syn.coupling <= 1.0)) throw std::invalid_argument("config 'coupling' must be in [0, 1]");
    experiment_config().validate();
    const double tf = get_real("train_fraction");
    if (!(tf > 0.0 && tf < 1.0)) throw std::invalid_argument("config 'train_fraction' must be in (0, 1)");
    if (!(get_real("grad_check_eps") > 0.0)) throw std::invalid_argument("config 'grad_check_eps' must be positive");
    if (!(get_real("grad_check_tolerance") > 0.0)) {
        throw std::invalid_argument("config 'grad_check_tolerance' must be positive");
    }
    get_bool("grad_check");
    get_size("grad_check_samples");
    get_size("grad_check_instances");
}

}  // namespace dynimp
