#include "dynimp/evaluation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "dynimp/kernels.hpp"
#include "dynimp/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dynimp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt_num(double v, int precision = 6) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

std::string fmt_level(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

void softmax_inplace(std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (auto& v : logits) {
        v = std::exp(v - mx);
        s += v;
    }
    for (auto& v : logits) v /= s;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<double> pooled_features(const Tensor2& window) {
    const auto T = window.rows();
    const auto C = window.cols();
    std::vector<double> out(2 * C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        double m = 0.0;
        for (std::size_t t = 0; t < T; ++t) m += window(t, c);
        m /= static_cast<double>(T);
        double ss = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const double d = window(t, c) - m;
            ss += d * d;
        }
        out[c] = m;
        out[C + c] = std::sqrt(ss / static_cast<double>(T));
    }
    return out;
}

std::vector<double> ClassifierModel::probabilities(const Tensor2& window) const {
    auto x = pooled_features(window);
    if (x.size() != feature_mean.size()) {
        throw std::invalid_argument("classifier expects " + std::to_string(feature_mean.size()) +
                                    " pooled features, got " + std::to_string(x.size()));
    }
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = (x[j] - feature_mean[j]) / feature_scale[j];
    std::vector<double> logits(num_classes());
    for (std::size_t l = 0; l < logits.size(); ++l) {
        double a = bias(l, 0);
        const auto w = weights.row(l);
        for (std::size_t j = 0; j < x.size(); ++j) a += w[j] * x[j];
        logits[l] = a;
    }
    softmax_inplace(logits);
    return logits;
}

int ClassifierModel::predict(const Tensor2& window) const {
    const auto p = probabilities(window);
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

ClassifierModel train_classifier(const std::vector<Tensor2>& inputs, std::span<const int> labels,
                                 std::size_t num_classes, const ClassifierHyper& hyper,
                                 const std::vector<std::string>& class_names) {
    if (inputs.size() != labels.size()) throw std::invalid_argument("train_classifier: inputs/labels length mismatch");
    if (inputs.empty()) throw std::invalid_argument("train_classifier: no training windows");
    std::vector<std::size_t> per_class(num_classes, 0);
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw std::invalid_argument("train_classifier: label " + std::to_string(y) + " outside [0, " +
                                        std::to_string(num_classes) + ")");
        }
        ++per_class[static_cast<std::size_t>(y)];
    }
    for (std::size_t l = 0; l < num_classes; ++l) {
        if (per_class[l] == 0) {
            const auto name = l < class_names.size() ? class_names[l] : std::to_string(l);
            throw std::invalid_argument("train_classifier: class '" + name + "' has no training window");
        }
    }

    const auto N = inputs.size();
    std::vector<std::vector<double>> X;
    X.reserve(N);
    for (const auto& w : inputs) X.push_back(pooled_features(w));
    const auto P = X.front().size();

    ClassifierModel m;
    m.feature_mean.assign(P, 0.0);
    m.feature_scale.assign(P, 1.0);
    for (const auto& x : X) {
        for (std::size_t j = 0; j < P; ++j) m.feature_mean[j] += x[j];
    }
    for (auto& v : m.feature_mean) v /= static_cast<double>(N);
    std::vector<double> var(P, 0.0);
    for (const auto& x : X) {
        for (std::size_t j = 0; j < P; ++j) var[j] += (x[j] - m.feature_mean[j]) * (x[j] - m.feature_mean[j]);
    }
    for (std::size_t j = 0; j < P; ++j) {
        const double sd = std::sqrt(var[j] / static_cast<double>(N));
        m.feature_scale[j] = sd > 1e-12 ? sd : 1.0;
    }
    for (auto& x : X) {
        for (std::size_t j = 0; j < P; ++j) x[j] = (x[j] - m.feature_mean[j]) / m.feature_scale[j];
    }

    m.weights = Tensor2(num_classes, P, 0.0);
    m.bias = Tensor2(num_classes, 1, 0.0);
    if (hyper.seed != 0) {
        // small symmetric-breaking init; zero seed keeps the all-zero start
        Rng rng(derive_seed(hyper.seed, {0x636c6173ULL}));
        for (auto& v : m.weights.flat()) v = rng.uniform(-1e-3, 1e-3);
    }
    Tensor2 gw(num_classes, P), gb(num_classes, 1);
    std::vector<Tensor2*> params{&m.weights, &m.bias};
    std::vector<const Tensor2*> grads{&gw, &gb};
    auto adam = AdamState::zeros_like(std::vector<const Tensor2*>{&m.weights, &m.bias});
    const AdamHyper ah{hyper.lr, 0.9, 0.999, 1e-8};
    std::vector<double> logits(num_classes);
    for (std::size_t it = 0; it < hyper.iterations; ++it) {
        gw.fill(0.0);
        gb.fill(0.0);
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t l = 0; l < num_classes; ++l) {
                double a = m.bias(l, 0);
                const auto w = m.weights.row(l);
                for (std::size_t j = 0; j < P; ++j) a += w[j] * X[n][j];
                logits[l] = a;
            }
            softmax_inplace(logits);
            for (std::size_t l = 0; l < num_classes; ++l) {
                const double d = (logits[l] - (static_cast<std::size_t>(labels[n]) == l ? 1.0 : 0.0)) /
                                 static_cast<double>(N);
                gb(l, 0) += d;
                auto g = gw.row(l);
                for (std::size_t j = 0; j < P; ++j) g[j] += d * X[n][j];
            }
        }
        for (std::size_t l = 0; l < num_classes; ++l) {
            for (std::size_t j = 0; j < P; ++j) gw(l, j) += hyper.l2 * m.weights(l, j);
        }
        adam_step(params, grads, adam, ah);
    }
    return m;
}

double balanced_accuracy(std::span<const int> predictions, std::span<const int> truth, std::size_t num_classes) {
    if (predictions.size() != truth.size()) throw std::invalid_argument("balanced_accuracy: length mismatch");
    if (truth.empty()) throw std::invalid_argument("balanced_accuracy: empty input");
    std::vector<std::size_t> total(num_classes, 0), correct(num_classes, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int y = truth[i];
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw std::invalid_argument("balanced_accuracy: truth label " + std::to_string(y) + " outside [0, " +
                                        std::to_string(num_classes) + ")");
        }
        ++total[static_cast<std::size_t>(y)];
        if (predictions[i] == y) ++correct[static_cast<std::size_t>(y)];
    }
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t l = 0; l < num_classes; ++l) {
        if (total[l] == 0) continue;
        sum += static_cast<double>(correct[l]) / static_cast<double>(total[l]);
        ++present;
    }
    return sum / static_cast<double>(present);
}

double imputation_rmse(const std::vector<ImputedWindow>& imputed, const GroundTruthStore& ground) {
    if (ground.empty()) throw std::invalid_argument("imputation_rmse: empty ground-truth store");
    double ss = 0.0;
    for (const auto& g : ground) {
        if (g.window >= imputed.size()) throw std::out_of_range("imputation_rmse: window index out of range");
        const double d = imputed[g.window].values(g.t, g.f) - g.value;
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(ground.size()));
}

Split stratified_split(std::span<const int> labels, std::size_t num_classes, double train_fraction,
                       std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train fraction must be in (0, 1)");
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    Split s;
    Rng rng(derive_seed(seed, {0x73706c74ULL}));
    for (auto& members : by_class) {
        if (members.empty()) continue;
        rng.shuffle(members.begin(), members.end());
        const auto n = members.size();
        auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
        n_train = std::clamp<std::size_t>(n_train, 1, n >= 2 ? n - 1 : 1);
        s.train.insert(s.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
        s.validation.insert(s.validation.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.validation.begin(), s.validation.end());
    return s;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& all_method_names() {
    static const std::vector<std::string> names = {"zero",       "mean",        "interp",        "knn",       "indicator",
                                                   "dynimp-zero", "dynimp-mean", "dynimp-interp", "dynimp-knn"};
    return names;
}

MethodSpec parse_method(const std::string& name) {
    MethodSpec m;
    m.name = name;
    if (name == "indicator") {
        m.imputer = ImputerKind::mean;
        m.indicator = true;
        return m;
    }
    constexpr std::string_view prefix = "dynimp-";
    try {
        if (name.rfind(prefix, 0) == 0) {
            m.dynimp = true;
            m.imputer = parse_imputer_kind(name.substr(prefix.size()));
        } else {
            m.imputer = parse_imputer_kind(name);
        }
    } catch (const std::invalid_argument&) {
        std::string known;
        for (const auto& n : all_method_names()) known += (known.empty() ? "" : ", ") + n;
        throw std::invalid_argument("unknown method '" + name + "' (known: " + known + ")");
    }
    return m;
}

std::string to_string(LabelMode mode) { return mode == LabelMode::movement4 ? "movement4" : "combined16"; }

LabelMode parse_label_mode(const std::string& s) {
    if (s == "movement4") return LabelMode::movement4;
    if (s == "combined16") return LabelMode::combined16;
    throw std::invalid_argument("unknown label mode '" + s + "' (expected movement4 | combined16)");
}

void ExperimentConfig::validate() const {
    if (methods.empty()) throw std::invalid_argument("experiment needs at least one method");
    if (levels.empty()) throw std::invalid_argument("experiment needs at least one missingness level");
    if (seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
    for (const auto& m : methods) parse_method(m);
    for (double l : levels) {
        if (!(l >= 0.0 && l < 1.0)) throw std::invalid_argument("missingness level " + fmt_level(l) + " outside [0, 1)");
    }
    if (neighbors < 1) throw std::invalid_argument("neighbor count k must be >= 1");
    if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
    if (classifier.iterations < 1) throw std::invalid_argument("classifier needs at least one iteration");
    if (!(classifier.lr > 0.0)) throw std::invalid_argument("classifier learning rate must be positive");
    if (!(classifier.l2 >= 0.0)) throw std::invalid_argument("classifier L2 penalty must be non-negative");
    dynimp.validate();
}

std::size_t ExperimentOutput::failed_cells() const {
    return static_cast<std::size_t>(
        std::count_if(results.begin(), results.end(), [](const ExperimentResult& r) { return !r.error.empty(); }));
}

Dataset prepare_labels(const Dataset& raw, LabelMode mode) {
    Dataset ds = mode == LabelMode::movement4 ? collapse_to_movement(raw) : raw;
    std::vector<int> present(ds.num_labels(), 0);
    for (const auto& w : ds.windows) present[static_cast<std::size_t>(w.label_id)] = 1;
    std::vector<int> remap(ds.num_labels(), -1);
    std::vector<std::string> names;
    for (std::size_t l = 0; l < ds.num_labels(); ++l) {
        if (present[l]) {
            remap[l] = static_cast<int>(names.size());
            names.push_back(ds.label_names[l]);
        }
    }
    for (auto& w : ds.windows) w.label_id = remap[static_cast<std::size_t>(w.label_id)];
    ds.label_names = std::move(names);
    return ds;
}

CellData prepare_cell(const Dataset& labeled, const ExperimentConfig& config, double level, std::uint64_t seed) {
    CellData cell;
    std::vector<int> labels;
    labels.reserve(labeled.windows.size());
    for (const auto& w : labeled.windows) labels.push_back(w.label_id);
    cell.split = stratified_split(labels, labeled.num_labels(), config.train_fraction, seed);

    Dataset scaled = labeled;
    if (scaled.scaling.mode == ScalingMode::none && config.scaling != ScalingMode::none) {
        std::vector<Window> train;
        train.reserve(cell.split.train.size());
        for (auto i : cell.split.train) train.push_back(labeled.windows[i]);
        apply_scaling(scaled, fit_scaling(train, labeled.feature_names, config.scaling), true);
    }
    auto [injected, truth] = inject_missingness(scaled, level, derive_seed(seed, {std::bit_cast<std::uint64_t>(level)}));
    cell.dataset = std::move(injected);
    cell.truth = std::move(truth);

    std::vector<Window> train;
    train.reserve(cell.split.train.size());
    for (auto i : cell.split.train) train.push_back(cell.dataset.windows[i]);
    cell.train_means = observed_feature_means(train);
    return cell;
}

std::vector<ImputedWindow> impute_cell(const CellData& cell, const MethodSpec& method, const ExperimentConfig& config,
                                       double level, std::uint64_t seed) {
    const auto& windows = cell.dataset.windows;
    if (!method.dynimp) return parallel::impute_all(windows, method.imputer, cell.train_means, config.neighbors);

    DynImpConfig dc = config.dynimp;
    dc.padding = method.imputer;
    dc.neighbors = config.neighbors;
    // variants share init and corruption streams so they differ only in padding
    auto model = make_model(cell.dataset.num_features(), dc, derive_seed(seed, {std::bit_cast<std::uint64_t>(level), 0x64796eULL}));
    model.feature_means = cell.train_means;
    std::vector<Window> train_windows;
    train_windows.reserve(cell.split.train.size());
    for (auto i : cell.split.train) train_windows.push_back(windows[i]);
    train(model, train_windows);
    return parallel::impute_all(model, windows);
}

ExperimentResult evaluate_method(const CellData& cell, const MethodSpec& method, const ExperimentConfig& config,
                                 double level, std::uint64_t seed) {
    ExperimentResult r{method.name, level, seed, kNaN, kNaN, {}};
    const auto imputed = impute_cell(cell, method, config, level, seed);
    if (!cell.truth.empty()) r.rmse = imputation_rmse(imputed, cell.truth);

    auto features = [&](std::size_t i) { return method.indicator ? augment_indicator(imputed[i]) : imputed[i].values; };
    std::vector<Tensor2> xs;
    std::vector<int> ys;
    for (auto i : cell.split.train) {
        xs.push_back(features(i));
        ys.push_back(cell.dataset.windows[i].label_id);
    }
    const auto L = cell.dataset.num_labels();
    auto hyper = config.classifier;
    const auto clf = train_classifier(xs, ys, L, hyper, cell.dataset.label_names);
    std::vector<int> pred, truth;
    for (auto i : cell.split.validation) {
        pred.push_back(clf.predict(features(i)));
        truth.push_back(cell.dataset.windows[i].label_id);
    }
    r.balanced_accuracy = balanced_accuracy(pred, truth, L);
    return r;
}

ExperimentOutput run_experiment(const Dataset& dataset, const ExperimentConfig& config) {
    config.validate();
    dataset.validate();
    const auto labeled = prepare_labels(dataset, config.labels);
    std::vector<MethodSpec> methods;
    for (const auto& m : config.methods) methods.push_back(parse_method(m));

    const auto nl = config.levels.size();
    const auto ns = config.seeds.size();
    const auto nm = methods.size();
    ExperimentOutput out;
    out.results.resize(nl * ns * nm);

    const auto cells = static_cast<std::ptrdiff_t>(out.results.size());
#pragma omp parallel for schedule(dynamic) num_threads(config.jobs)
    for (std::ptrdiff_t c = 0; c < cells; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        const auto li = ci / (ns * nm);
        const auto si = (ci / nm) % ns;
        const auto mi = ci % nm;
        const double level = config.levels[li];
        const auto seed = config.seeds[si];
        auto& r = out.results[ci];
        try {
            const auto cell = prepare_cell(labeled, config, level, seed);
            r = evaluate_method(cell, methods[mi], config, level, seed);
        } catch (const std::exception& e) {
            r = ExperimentResult{methods[mi].name, level, seed, kNaN, kNaN, e.what()};
        }
    }
    out.aggregates = aggregate(out.results, config.methods, config.levels);
    return out;
}

std::vector<AggregateResult> aggregate(const std::vector<ExperimentResult>& results,
                                       const std::vector<std::string>& methods, const std::vector<double>& levels) {
    std::vector<AggregateResult> out;
    for (const auto& m : methods) {
        for (double level : levels) {
            std::vector<double> bas;
            for (const auto& r : results) {
                if (r.method == m && r.level == level && r.error.empty()) bas.push_back(r.balanced_accuracy);
            }
            AggregateResult a{m, level, kNaN, kNaN, bas.size(), kNaN, kNaN};
            if (!bas.empty()) {
                const double n = static_cast<double>(bas.size());
                double mean = 0.0;
                for (double b : bas) mean += b;
                mean /= n;
                double ss = 0.0;
                for (double b : bas) ss += (b - mean) * (b - mean);
                const double sd = bas.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
                a.mean_ba = mean;
                a.ci_half_width = 1.96 * sd / std::sqrt(n);
                a.min_ba = *std::min_element(bas.begin(), bas.end());
                a.max_ba = *std::max_element(bas.begin(), bas.end());
            }
            out.push_back(a);
        }
    }
    return out;
}

void write_results_csv(std::ostream& os, const std::vector<ExperimentResult>& results) {
    os << "# dynimp-results v1\n";
    os << "method,level,seed,ba,rmse\n";
    for (const auto& r : results) {
        os << r.method << ',' << fmt_level(r.level) << ',' << r.seed << ',' << fmt_num(r.balanced_accuracy) << ','
           << fmt_num(r.rmse) << '\n';
    }
}

void write_aggregate_csv(std::ostream& os, const std::vector<AggregateResult>& aggregates) {
    os << "# dynimp-aggregate v1\n";
    os << "method,level,mean_ba,ci95,seeds\n";
    for (const auto& a : aggregates) {
        os << a.method << ',' << fmt_level(a.level) << ',' << fmt_num(a.mean_ba, 4) << ',' << fmt_num(a.ci_half_width, 4)
           << ',' << a.seeds << '\n';
    }
}

namespace {

const AggregateResult* find_aggregate(const std::vector<AggregateResult>& aggs, const std::string& m, double level) {
    for (const auto& a : aggs) {
        if (a.method == m && a.level == level) return &a;
    }
    return nullptr;
}

}  // namespace

void write_table1_csv(std::ostream& os, const std::vector<AggregateResult>& aggregates,
                      const std::vector<std::string>& methods, const std::vector<double>& levels) {
    os << "# dynimp-table1 v1\n";
    os << "level";
    for (const auto& m : methods) os << ',' << m << ',' << m << "_ci95";
    os << '\n';
    for (double level : levels) {
        os << fmt_level(level);
        for (const auto& m : methods) {
            const auto* a = find_aggregate(aggregates, m, level);
            os << ',' << fmt_num(a ? a->mean_ba : kNaN, 4) << ',' << fmt_num(a ? a->ci_half_width : kNaN, 4);
        }
        os << '\n';
    }
}

void write_table2_csv(std::ostream& os, const std::vector<AggregateResult>& aggregates,
                      const std::vector<std::string>& methods, const std::vector<double>& levels) {
    os << "# dynimp-table2 v1\n";
    os << "variant";
    for (double level : levels) os << ',' << fmt_level(level);
    os << '\n';
    for (const auto& m : methods) {
        if (!parse_method(m).dynimp) continue;
        os << m;
        for (double level : levels) {
            const auto* a = find_aggregate(aggregates, m, level);
            os << ',' << fmt_num(a ? a->mean_ba : kNaN, 4);
        }
        os << '\n';
    }
}

}  // namespace dynimp
