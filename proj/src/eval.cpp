#include "auscult/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>

#include "auscult/error.hpp"
#include "auscult/parallel.hpp"
#include "auscult/random.hpp"

namespace auscult {

namespace {

constexpr int kPipelineFormatVersion = 1;

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

std::string cell_key(Decomposition d, FeatureSet f, SelectorKind s, ClassifierKind c) {
    return std::string(to_string(d)) + "/" + std::string(to_string(f)) + "/" + std::string(to_string(s)) + "/" +
           std::string(to_string(c));
}

}  // namespace

// ---- metrics ----------------------------------------------------------------

Metrics compute_metrics(const Labels& truth, const Labels& predicted) {
    if (truth.size() != predicted.size()) {
        throw DataError("metrics: " + std::to_string(truth.size()) + " true labels vs " +
                        std::to_string(predicted.size()) + " predictions");
    }
    if (truth.empty()) throw DataError("metrics need at least one label");
    Metrics m;
    auto& c = m.confusion;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool t = truth[i] == Label::Crackle;
        const bool p = predicted[i] == Label::Crackle;
        if (t && p) ++c.tp;
        else if (!t && p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    m.accuracy = ratio(c.tp + c.tn, c.total());
    m.precision = ratio(c.tp, c.tp + c.fp);
    m.recall = ratio(c.tp, c.tp + c.fn);
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

Metrics mean_metrics(const std::vector<Metrics>& folds) {
    Metrics m;
    if (folds.empty()) return m;
    for (const auto& f : folds) {
        m.accuracy += f.accuracy;
        m.precision += f.precision;
        m.recall += f.recall;
        m.f1 += f.f1;
        m.confusion.tp += f.confusion.tp;
        m.confusion.fp += f.confusion.fp;
        m.confusion.fn += f.confusion.fn;
        m.confusion.tn += f.confusion.tn;
    }
    const auto n = static_cast<double>(folds.size());
    m.accuracy /= n;
    m.precision /= n;
    m.recall /= n;
    m.f1 /= n;
    return m;
}

nlohmann::json to_json(const Metrics& m) {
    return {{"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"confusion", {{"tp", m.confusion.tp}, {"fp", m.confusion.fp}, {"fn", m.confusion.fn}, {"tn", m.confusion.tn}}}};
}

Metrics metrics_from_json(const nlohmann::json& j) {
    Metrics m;
    m.accuracy = j.at("accuracy").get<double>();
    m.precision = j.at("precision").get<double>();
    m.recall = j.at("recall").get<double>();
    m.f1 = j.at("f1").get<double>();
    const auto& c = j.at("confusion");
    m.confusion = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>(),
                   c.at("tn").get<std::size_t>()};
    return m;
}

// ---- splitting ----------------------------------------------------------------

std::vector<int> stratified_kfold(const std::vector<std::string>& ids, const Labels& labels, int k,
                                  std::uint64_t seed) {
    if (k < 2) throw ConfigError("cross-validation needs k >= 2 (got " + std::to_string(k) + ")");
    if (ids.size() != labels.size()) throw DataError("ids and labels differ in length");
    std::vector<std::size_t> dealt;
    dealt.reserve(ids.size());
    for (int c = 0; c < 2; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (static_cast<int>(labels[i]) == c) idx.push_back(i);
        }
        if (idx.size() < static_cast<std::size_t>(k)) {
            throw DataError("class " + std::string(to_string(Label(c))) + " has " + std::to_string(idx.size()) +
                            " rows, fewer than k=" + std::to_string(k) + " folds");
        }
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return ids[a] != ids[b] ? ids[a] < ids[b] : a < b;
        });
        std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(c)}));
        std::shuffle(idx.begin(), idx.end(), rng);
        dealt.insert(dealt.end(), idx.begin(), idx.end());
    }
    std::vector<int> fold(ids.size());
    for (std::size_t p = 0; p < dealt.size(); ++p) fold[dealt[p]] = static_cast<int>(p % static_cast<std::size_t>(k));
    return fold;
}

std::vector<int> grouped_kfold(const std::vector<std::string>& groups, const Labels& labels, int k,
                               std::uint64_t seed) {
    if (k < 2) throw ConfigError("cross-validation needs k >= 2 (got " + std::to_string(k) + ")");
    if (groups.size() != labels.size()) throw DataError("groups and labels differ in length");
    struct Group {
        std::string name;
        std::size_t rows = 0, crackle = 0;
        int fold = 0;
    };
    std::map<std::string, Group> by_name;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        auto& g = by_name[groups[i]];
        g.name = groups[i];
        ++g.rows;
        g.crackle += labels[i] == Label::Crackle;
    }
    if (by_name.size() < static_cast<std::size_t>(k)) {
        throw DataError("only " + std::to_string(by_name.size()) + " patients for k=" + std::to_string(k) +
                        " grouped folds");
    }
    std::vector<Group*> order;
    for (auto& [_, g] : by_name) order.push_back(&g);
    std::mt19937_64 rng(derive_seed(seed, {2}));
    std::shuffle(order.begin(), order.end(), rng);
    std::stable_sort(order.begin(), order.end(), [](const Group* a, const Group* b) {
        return a->crackle != b->crackle ? a->crackle > b->crackle : a->rows > b->rows;
    });
    std::vector<std::size_t> fold_crackle(static_cast<std::size_t>(k), 0), fold_rows(static_cast<std::size_t>(k), 0);
    for (auto* g : order) {
        std::size_t best = 0;
        for (std::size_t f = 1; f < fold_rows.size(); ++f) {
            if (std::tie(fold_crackle[f], fold_rows[f]) < std::tie(fold_crackle[best], fold_rows[best])) best = f;
        }
        g->fold = static_cast<int>(best);
        fold_crackle[best] += g->crackle;
        fold_rows[best] += g->rows;
    }
    std::vector<int> fold(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) fold[i] = by_name.at(groups[i]).fold;
    return fold;
}

// ---- fitted pipeline -----------------------------------------------------------

Labels FittedPipeline::predict(const Rows& rows) const {
    if (rows.empty()) return {};
    return classifier->predict(selector.transform(minmax_apply(scaling, rows)));
}

nlohmann::json FittedPipeline::to_json() const {
    return {{"version", kPipelineFormatVersion},
            {"feature_names", feature_names},
            {"scaling", auscult::to_json(scaling)},
            {"selector", auscult::to_json(selector)},
            {"classifier", classifier->to_json()}};
}

FittedPipeline pipeline_from_json(const nlohmann::json& j) {
    FittedPipeline p;
    try {
        if (j.at("version").get<int>() != kPipelineFormatVersion) {
            throw DataError("unsupported pipeline version " + j.at("version").dump());
        }
        p.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        p.scaling = scaling_from_json(j.at("scaling"));
        p.selector = selector_from_json(j.at("selector"));
        p.classifier = classifier_from_json(j.at("classifier"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed pipeline: ") + e.what());
    }
    if (p.scaling.min.size() != p.feature_names.size() || p.selector.input_dim != p.feature_names.size()) {
        throw DataError("pipeline parts disagree on the feature count");
    }
    return p;
}

FittedPipeline fit_pipeline(const FeatureMatrix& train, const SelectorSpec& selector, const ClassifierSpec& classifier,
                            std::uint64_t selector_seed, const std::optional<MinMaxScaling>& scaling) {
    if (train.size() == 0) throw DataError("empty training fold");
    FittedPipeline p;
    p.feature_names = train.feature_names;
    p.scaling = scaling ? *scaling : minmax_fit(train.rows);
    const Rows scaled = minmax_apply(p.scaling, train.rows);
    p.selector = fit_selector(selector, scaled, train.labels, selector_seed);
    p.classifier = fit_classifier(classifier, p.selector.transform(scaled), train.labels);
    return p;
}

// ---- cross-validation and grid search -------------------------------------------

void CvOptions::validate() const {
    if (k < 2) throw ConfigError("cross-validation needs k >= 2 (got " + std::to_string(k) + ")");
    if (workers < 1) throw ConfigError("workers must be >= 1");
}

std::vector<int> assign_folds(const FeatureMatrix& m, const CvOptions& opts) {
    if (opts.group_by_patient) return grouped_kfold(m.groups, m.labels, opts.k, opts.split_seed);
    return stratified_kfold(m.cycle_ids, m.labels, opts.k, opts.split_seed);
}

std::uint64_t fold_classifier_seed(const CvOptions& opts, int fold) {
    return derive_seed(opts.model_seed, {static_cast<std::uint64_t>(fold), 1});
}

std::uint64_t fold_selector_seed(const CvOptions& opts, int fold) {
    return derive_seed(opts.model_seed, {static_cast<std::uint64_t>(fold), 2});
}

FittedPipeline fit_fold(const FeatureMatrix& m, const std::vector<int>& folds, int fold, const SelectorSpec& selector,
                        const ClassifierSpec& classifier, const CvOptions& opts) {
    if (folds.size() != m.size()) throw DataError("fold assignment does not match the matrix");
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < folds.size(); ++i) {
        if (folds[i] != fold) train_idx.push_back(i);
    }
    std::optional<MinMaxScaling> global;
    if (opts.paper_compat_scaling) global = minmax_fit(m.rows);
    ClassifierSpec spec = classifier;
    spec.seed = fold_classifier_seed(opts, fold);
    return fit_pipeline(m.subset_rows(train_idx), selector, spec, fold_selector_seed(opts, fold), global);
}

CvResult cross_validate(const FeatureMatrix& m, const SelectorSpec& selector, const ClassifierSpec& classifier,
                        const CvOptions& opts) {
    opts.validate();
    classifier.validate();
    const auto folds = assign_folds(m, opts);

    const auto k = static_cast<std::size_t>(opts.k);
    std::vector<Metrics> metrics(k);
    std::vector<std::size_t> dims(k);
    std::vector<std::vector<std::string>> warnings(k);
    parallel_for(k, opts.workers, [&](std::size_t f) {
        std::vector<std::size_t> test_idx;
        for (std::size_t i = 0; i < folds.size(); ++i) {
            if (folds[i] == static_cast<int>(f)) test_idx.push_back(i);
        }
        const FeatureMatrix test = m.subset_rows(test_idx);
        const auto pipe = fit_fold(m, folds, static_cast<int>(f), selector, classifier, opts);
        metrics[f] = compute_metrics(test.labels, pipe.predict(test.rows));
        dims[f] = pipe.selector.output_dim;
        for (const auto& w : pipe.classifier->warnings()) warnings[f].push_back("fold " + std::to_string(f + 1) + ": " + w);
    });
    CvResult r;
    r.folds = std::move(metrics);
    r.mean = mean_metrics(r.folds);
    r.selected_dim = dims.front();
    for (auto& w : warnings) r.warnings.insert(r.warnings.end(), w.begin(), w.end());
    return r;
}

GridResult grid_search(const FeatureMatrix& m, const SelectorSpec& selector, const std::vector<ClassifierSpec>& grid,
                       const CvOptions& opts) {
    if (grid.empty()) throw ConfigError("empty hyperparameter grid");
    GridResult g;
    std::exception_ptr first_error;
    bool have = false;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        GridPoint p{grid[i], std::nullopt, {}};
        try {
            p.result = cross_validate(m, selector, grid[i], opts);
        } catch (const Error& e) {
            p.error = e.what();
            if (!first_error) first_error = std::current_exception();
        }
        if (p.result && (!have || p.result->mean.accuracy > g.points[g.best].result->mean.accuracy)) {
            g.best = i;
            have = true;
        }
        g.points.push_back(std::move(p));
    }
    if (!have) std::rethrow_exception(first_error);
    return g;
}

// ---- experiment matrix -----------------------------------------------------------

void ExperimentConfig::validate() const {
    if (decompositions.empty() || feature_sets.empty() || selectors.empty() || classifiers.empty()) {
        throw ConfigError("experiment needs at least one decomposition, feature set, selector and classifier");
    }
    if (k < 2) throw ConfigError("cross-validation needs k >= 2 (got " + std::to_string(k) + ")");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (selector_output_dim < 1) throw ConfigError("selector output_dim must be >= 1");
    for (const auto& c : classifiers) expand_grid(c.kind, c.grid);  // throws on bad keys or values
}

MatrixProvider cycle_matrix_provider(const std::vector<CycleRecord>& cycles, const DecompositionConfig& dcfg,
                                     const FeatureConfig& fcfg, std::uint64_t seed, int workers) {
    struct Cache {
        std::mutex mutex;
        std::map<Decomposition, FeatureMatrix> full;
    };
    auto cache = std::make_shared<Cache>();
    return [&cycles, dcfg, fcfg, seed, workers, cache](Decomposition d, FeatureSet fs) {
        std::lock_guard lock(cache->mutex);
        auto it = cache->full.find(d);
        if (it == cache->full.end()) {
            FeatureBuildOptions opts;
            opts.decomposition = d;
            opts.decomposition_cfg = dcfg;
            opts.feature_set = FeatureSet::Full;
            opts.feature_cfg = fcfg;
            opts.seed = seed;
            opts.workers = workers;
            it = cache->full.emplace(d, build_feature_matrix(cycles, opts).matrix).first;
        }
        FeatureMatrix m = it->second.subset_columns(feature_names(d, dcfg, fs, fcfg));
        m.provenance["feature_set"] = to_string(fs);
        return m;
    };
}

EvalReport run_matrix(const ExperimentConfig& cfg, const MatrixProvider& matrices) {
    cfg.validate();
    EvalReport report;
    report.config = to_json(cfg);

    struct Input {
        std::optional<FeatureMatrix> matrix;
        std::string error;
    };
    std::map<std::pair<Decomposition, FeatureSet>, Input> inputs;
    for (auto d : cfg.decompositions) {
        for (auto f : cfg.feature_sets) {
            Input in;
            try {
                in.matrix = matrices(d, f);
            } catch (const Error& e) {
                in.error = e.what();
            }
            inputs.emplace(std::make_pair(d, f), std::move(in));
        }
    }

    std::vector<CellReport> cells;
    for (auto d : cfg.decompositions)
        for (auto f : cfg.feature_sets)
            for (auto s : cfg.selectors)
                for (const auto& c : cfg.classifiers) {
                    CellReport cell;
                    cell.index = cells.size();
                    cell.decomposition = d;
                    cell.feature_set = f;
                    cell.selector = s;
                    cell.classifier = c.kind;
                    cell.seed = derive_seed(cfg.seed, {fnv1a(cell_key(d, f, s, c.kind))});
                    cells.push_back(std::move(cell));
                }

    std::vector<const ClassifierGrid*> grid_of(cells.size());
    {
        std::size_t i = 0;
        for (std::size_t a = 0; a < cfg.decompositions.size() * cfg.feature_sets.size() * cfg.selectors.size(); ++a)
            for (const auto& c : cfg.classifiers) grid_of[i++] = &c;
    }

    parallel_for(cells.size(), cfg.workers, [&](std::size_t i) {
        CellReport& cell = cells[i];
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const Input& in = inputs.at({cell.decomposition, cell.feature_set});
            if (!in.matrix) throw DataError(in.error);
            const FeatureMatrix& m = *in.matrix;
            cell.rows = m.size();
            cell.input_dim = m.width();
            SelectorSpec sel{cell.selector, cfg.selector_output_dim, cfg.autoencoder};
            CvOptions opts;
            opts.k = cfg.k;
            opts.split_seed = cfg.seed;
            opts.model_seed = cell.seed;
            opts.group_by_patient = cfg.group_by_patient;
            opts.paper_compat_scaling = cfg.paper_compat_scaling;
            const auto g = grid_search(m, sel, expand_grid(cell.classifier, grid_of[i]->grid), opts);
            for (const auto& p : g.points) {
                if (p.result) {
                    cell.grid.emplace_back(p.spec.describe(), p.result->mean.accuracy);
                } else {
                    cell.warnings.push_back(p.spec.describe() + " failed: " + p.error);
                }
            }
            const auto& best = g.best_result();
            cell.best = g.best_spec();
            cell.best->seed = cell.seed;
            cell.folds = best.folds;
            cell.mean = best.mean;
            cell.selected_dim = best.selected_dim;
            cell.warnings.insert(cell.warnings.end(), best.warnings.begin(), best.warnings.end());
        } catch (const Error& e) {
            cell.error = e.what();
        }
        cell.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });

    std::stable_sort(cells.begin(), cells.end(), [](const CellReport& a, const CellReport& b) {
        if (a.mean.has_value() != b.mean.has_value()) return a.mean.has_value();
        return a.mean && a.mean->accuracy > b.mean->accuracy;
    });
    report.cells = std::move(cells);
    return report;
}

// ---- serialization ----------------------------------------------------------------

nlohmann::json to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    for (auto d : cfg.decompositions) j["decompositions"].push_back(to_string(d));
    for (auto f : cfg.feature_sets) j["feature_sets"].push_back(to_string(f));
    for (auto s : cfg.selectors) j["selectors"].push_back(to_string(s));
    j["selector_output_dim"] = cfg.selector_output_dim;
    j["autoencoder"] = {{"hidden", cfg.autoencoder.hidden},
                        {"epochs", cfg.autoencoder.epochs},
                        {"batch", cfg.autoencoder.batch},
                        {"learning_rate", cfg.autoencoder.learning_rate},
                        {"clip_norm", cfg.autoencoder.clip_norm}};
    for (const auto& c : cfg.classifiers) j["classifiers"].push_back({{"kind", to_string(c.kind)}, {"grid", c.grid}});
    j["k"] = cfg.k;
    j["seed"] = cfg.seed;
    j["group_by_patient"] = cfg.group_by_patient;
    j["paper_compat_scaling"] = cfg.paper_compat_scaling;
    return j;  // workers deliberately omitted: results do not depend on it
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells) {
        nlohmann::json j{{"index", c.index},
                         {"decomposition", to_string(c.decomposition)},
                         {"feature_set", to_string(c.feature_set)},
                         {"selector", to_string(c.selector)},
                         {"classifier", to_string(c.classifier)},
                         {"seed", c.seed},
                         {"rows", c.rows},
                         {"input_dim", c.input_dim},
                         {"selected_dim", c.selected_dim},
                         {"warnings", c.warnings},
                         {"error", c.error},
                         {"wall_time_s", c.wall_time_s}};
        if (c.best) j["best"] = {{"params", params_to_json(*c.best)}, {"describe", c.best->describe()}};
        j["folds"] = nlohmann::json::array();
        for (const auto& f : c.folds) j["folds"].push_back(to_json(f));
        if (c.mean) j["mean"] = to_json(*c.mean);
        j["grid"] = nlohmann::json::array();
        for (const auto& [spec, acc] : c.grid) j["grid"].push_back({{"spec", spec}, {"accuracy", acc}});
        cells.push_back(std::move(j));
    }
    return {{"version", 1}, {"config", r.config}, {"cells", cells}};
}

EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    try {
        r.config = j.at("config");
        for (const auto& c : j.at("cells")) {
            CellReport cell;
            cell.index = c.at("index").get<std::size_t>();
            cell.decomposition = parse_decomposition(c.at("decomposition").get<std::string>());
            cell.feature_set = parse_feature_set(c.at("feature_set").get<std::string>());
            cell.selector = parse_selector(c.at("selector").get<std::string>());
            cell.classifier = parse_classifier(c.at("classifier").get<std::string>());
            cell.seed = c.at("seed").get<std::uint64_t>();
            cell.rows = c.at("rows").get<std::size_t>();
            cell.input_dim = c.at("input_dim").get<std::size_t>();
            cell.selected_dim = c.at("selected_dim").get<std::size_t>();
            cell.warnings = c.at("warnings").get<std::vector<std::string>>();
            cell.error = c.at("error").get<std::string>();
            cell.wall_time_s = c.at("wall_time_s").get<double>();
            if (c.contains("best")) {
                cell.best = spec_from_params(cell.classifier, c.at("best").at("params"));
                cell.best->seed = cell.seed;
            }
            for (const auto& f : c.at("folds")) cell.folds.push_back(metrics_from_json(f));
            if (c.contains("mean")) cell.mean = metrics_from_json(c.at("mean"));
            for (const auto& g : c.at("grid")) cell.grid.emplace_back(g.at("spec").get<std::string>(), g.at("accuracy").get<double>());
            r.cells.push_back(std::move(cell));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed report: ") + e.what());
    }
    return r;
}

std::string report_csv(const EvalReport& r, std::size_t top) {
    std::ostringstream out;
    out << "rank,decomposition,feature_set,selector,classifier,params,rows,input_dim,selected_dim,"
           "accuracy,precision,recall,f1,error,wall_time_s\n";
    const std::size_t n = top > 0 ? std::min(top, r.cells.size()) : r.cells.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = r.cells[i];
        out << i + 1 << ',' << to_string(c.decomposition) << ',' << to_string(c.feature_set) << ','
            << to_string(c.selector) << ',' << to_string(c.classifier) << ','
            << csv_field(c.best ? c.best->describe() : std::string()) << ',' << c.rows << ',' << c.input_dim << ','
            << c.selected_dim << ',';
        if (c.mean) {
            out << fixed6(c.mean->accuracy) << ',' << fixed6(c.mean->precision) << ',' << fixed6(c.mean->recall) << ','
                << fixed6(c.mean->f1) << ',';
        } else {
            out << ",,,,";
        }
        out << csv_field(c.error) << ',' << fixed6(c.wall_time_s) << '\n';
    }
    return out.str();
}

void write_report(const std::filesystem::path& json_path, const std::filesystem::path& csv_path, const EvalReport& r) {
    {
        std::ofstream j(json_path);
        if (!j) throw ConfigError("cannot write " + json_path.string());
        j << to_json(r).dump(2) << '\n';
    }
    std::ofstream c(csv_path);
    if (!c) throw ConfigError("cannot write " + csv_path.string());
    c << report_csv(r);
}

}  // namespace auscult
