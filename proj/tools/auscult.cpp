// auscult: command-line driver for ingest -> extract -> select -> train ->
// evaluate -> matrix -> report. Each stage writes under --output-dir and
// records a content stamp next to its artifact, so rerunning a stage whose
// inputs and parameters are unchanged does nothing.
//
// Precedence for every option: command line > AUSCULT_<NAME> environment
// variable > --config file > built-in default.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "auscult/codec.hpp"
#include "auscult/cycle_store.hpp"
#include "auscult/error.hpp"
#include "auscult/eval.hpp"
#include "auscult/features.hpp"
#include "auscult/ingest.hpp"
#include "auscult/parallel.hpp"
#include "auscult/random.hpp"
#include "auscult/synthetic.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace auscult;

namespace {

// Bumped when a stage's output format or semantics change, to invalidate stamps.
constexpr const char* kStampVersion = "auscult-stage-1";

struct Global {
    int workers = 1;
    std::uint64_t seed = 0;
    fs::path output_dir = "auscult_out";
    std::string config;
    bool force = false;
};

void say(const std::string& line) { std::cout << line << '\n' << std::flush; }

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot read " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
        if (ec) throw ConfigError("cannot create " + p.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(p, std::ios::binary);
    if (!(out << text)) throw ConfigError("cannot write " + p.string() + " (is the output directory writable?)");
}

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw ConfigError("cannot create " + p.string() + ": " + ec.message());
}

json parse_json_arg(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(what + " is not valid JSON: " + text);
    }
}

// ---- content stamps ------------------------------------------------------------

std::vector<fs::path> files_with(const fs::path& dir, std::initializer_list<const char*> exts) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto ext = e.path().extension().string();
        if (std::any_of(exts.begin(), exts.end(), [&](const char* x) { return ext == x; })) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string hash_files(const std::vector<fs::path>& files, const fs::path& base) {
    Sha256 h;
    for (const auto& f : files) {
        h.update(fs::relative(f, base).generic_string()).update(std::string(1, '\0'));
        h.update_file(f.string());
    }
    return h.hex_digest();
}

std::string stage_key(const std::string& stage, const json& params, const std::string& inputs) {
    Sha256 h;
    h.update(kStampVersion).update(stage).update(params.dump()).update(inputs);
    return h.hex_digest();
}

/// `<artifact>.stamp` holds the key of the run that produced `artifact`.
class Stamp {
public:
    Stamp(fs::path artifact, std::string key, bool force)
        : artifact_(std::move(artifact)), key_(std::move(key)), force_(force) {}

    bool fresh() const {
        const auto p = path();
        if (force_ || !fs::exists(artifact_) || !fs::exists(p)) return false;
        try {
            return json::parse(read_text(p)).at("key").get<std::string>() == key_;
        } catch (const std::exception&) {
            return false;
        }
    }
    void commit() const { write_text(path(), json{{"key", key_}}.dump() + "\n"); }

private:
    fs::path path() const { return fs::path(artifact_.string() + ".stamp"); }
    fs::path artifact_;
    std::string key_;
    bool force_;
};

// ---- shared option groups --------------------------------------------------------

struct FeatureArgs {
    std::string scheme = "general";
    std::string decomposition = "none";
    std::string feature_set = "full";
    int ensembles = EemdConfig{}.ensembles;
    double noise_std = EemdConfig{}.noise_std_fraction;
    int max_imfs = EmdConfig{}.max_imfs;
    int keep_modes = EmdConfig{}.keep_modes;
    int dwt_levels = DwtConfig{}.levels;

    DecompositionConfig decomposition_cfg() const {
        DecompositionConfig c;
        c.eemd.ensembles = ensembles;
        c.eemd.noise_std_fraction = noise_std;
        c.eemd.emd.max_imfs = max_imfs;
        c.eemd.emd.keep_modes = keep_modes;
        c.dwt.levels = dwt_levels;
        c.dwt.keep_detail_levels = dwt_levels;
        c.validate();
        return c;
    }
    json knobs() const {
        return {{"ensembles", ensembles}, {"noise_std", noise_std}, {"max_imfs", max_imfs},
                {"keep_modes", keep_modes}, {"dwt_levels", dwt_levels}};
    }
};

void add_store_options(CLI::App* c, FeatureArgs& f) {
    c->add_option("--scheme", f.scheme, "Label scheme of the cycle store to read: general|pure");
}

void add_decomposition_options(CLI::App* c, FeatureArgs& f) {
    add_store_options(c, f);
    c->add_option("--ensembles", f.ensembles, "EEMD ensemble size");
    c->add_option("--noise-std", f.noise_std, "EEMD noise std as a fraction of the signal std");
    c->add_option("--max-imfs", f.max_imfs, "EMD: most IMFs to extract");
    c->add_option("--keep-modes", f.keep_modes, "EMD: leading IMFs kept as bands");
    c->add_option("--dwt-levels", f.dwt_levels, "DWT: decomposition levels (all details kept)");
}

void add_feature_options(CLI::App* c, FeatureArgs& f) {
    add_decomposition_options(c, f);
    c->add_option("--decomposition", f.decomposition, "none|emd|eemd|dwt|emd+dwt|eemd+dwt");
    c->add_option("--feature-set", f.feature_set, "simple|hos_spectral|full");
}

struct SelectorArgs {
    std::string selector = "none";
    std::size_t output_dim = 30;
    AutoencoderConfig ae;

    SelectorSpec spec() const { return {parse_selector(selector), output_dim, ae}; }
};

void add_selector_options(CLI::App* c, SelectorArgs& s, bool list) {
    if (!list) c->add_option("--selector", s.selector, "none|chi2|pca|autoencoder");
    c->add_option("--output-dim", s.output_dim, "Selector output width");
    c->add_option("--ae-hidden", s.ae.hidden, "Autoencoder hidden width");
    c->add_option("--ae-epochs", s.ae.epochs, "Autoencoder epochs");
    c->add_option("--ae-batch", s.ae.batch, "Autoencoder mini-batch size");
    c->add_option("--ae-lr", s.ae.learning_rate, "Autoencoder learning rate");
}

struct CvArgs {
    int k = 5;
    bool group_by_patient = false;
    bool paper_compat_scaling = false;
};

void add_cv_options(CLI::App* c, CvArgs& cv) {
    c->add_option("--k", cv.k, "Cross-validation folds");
    c->add_flag("--group-by-patient", cv.group_by_patient, "Keep each patient's cycles in one fold");
    c->add_flag("--paper-compat-scaling", cv.paper_compat_scaling,
                "Fit min-max scaling on all rows before splitting (leaks test ranges)");
}

// ---- cycle store and feature cache -----------------------------------------------

class Workspace {
public:
    explicit Workspace(const Global& g) : g_(g) {}

    fs::path store_dir(const std::string& scheme) const {
        return g_.output_dir / "cycles" / std::string(to_string(parse_scheme(scheme)));
    }

    const std::string& store_hash(const std::string& scheme) {
        auto it = store_hash_.find(scheme);
        if (it != store_hash_.end()) return it->second;
        const auto dir = store_dir(scheme);
        if (!fs::exists(dir / kManifestName)) {
            throw DataError("no cycle store at " + dir.string() + "; run `auscult ingest --scheme " + scheme +
                            " --data-dir <dir>` first");
        }
        auto files = files_with(dir, {".csv"});
        const auto cycles = files_with(dir / "cycles", {".lsc"});
        files.insert(files.end(), cycles.begin(), cycles.end());
        return store_hash_[scheme] = hash_files(files, dir);
    }

    const std::vector<CycleRecord>& cycles(const std::string& scheme) {
        auto it = cycles_.find(scheme);
        if (it != cycles_.end()) return it->second;
        store_hash(scheme);  // existence check with a helpful message
        return cycles_[scheme] = read_cycle_store(store_dir(scheme));
    }

    fs::path feature_path(const FeatureArgs& f, Decomposition d, FeatureSet set) const {
        return g_.output_dir / "features" /
               (std::string(to_string(parse_scheme(f.scheme))) + "_" + std::string(to_string(d)) + "_" +
                std::string(to_string(set)) + ".csv");
    }

    /// Cached feature matrix for (d, set); extracted and persisted when stale.
    FeatureMatrix features(const FeatureArgs& f, Decomposition d, FeatureSet set) {
        const auto dcfg = f.decomposition_cfg();
        const auto path = feature_path(f, d, set);
        json params{{"decomposition", to_string(d)}, {"feature_set", to_string(set)}, {"knobs", f.knobs()}};
        if (d == Decomposition::Eemd || d == Decomposition::EemdDwt) params["seed"] = g_.seed;
        const Stamp stamp(path, stage_key("extract", params, store_hash(f.scheme)), g_.force);
        if (stamp.fresh()) {
            say("extract: " + path.filename().string() + " up to date");
            return read_feature_matrix(path);
        }
        FeatureBuildOptions opts;
        opts.decomposition = d;
        opts.decomposition_cfg = dcfg;
        opts.feature_set = set;
        opts.seed = g_.seed;
        opts.workers = g_.workers;
        const auto& cyc = cycles(f.scheme);
        auto built = build_feature_matrix(cyc, opts);
        if (built.matrix.size() == 0) {
            throw DataError("every cycle failed extraction for " + std::string(to_string(d)) + "; first: " +
                            (built.dropped.empty() ? std::string("no cycles") : built.dropped.front().second));
        }
        ensure_dir(path.parent_path());
        write_feature_matrix(path, built.matrix);
        stamp.commit();
        say("extract: " + std::to_string(built.matrix.size()) + " cycles x " + std::to_string(built.matrix.width()) +
            " features -> " + path.string() +
            (built.dropped.empty() ? "" : " (" + std::to_string(built.dropped.size()) + " dropped)"));
        return built.matrix;
    }

    /// Provider for run_matrix: the full set once per decomposition, narrowed by name.
    MatrixProvider provider(const FeatureArgs& f) {
        return [this, f](Decomposition d, FeatureSet set) {
            auto it = full_.find(d);
            if (it == full_.end()) it = full_.emplace(d, features(f, d, FeatureSet::Full)).first;
            auto m = it->second.subset_columns(feature_names(d, f.decomposition_cfg(), set, FeatureConfig{}));
            m.provenance["feature_set"] = to_string(set);
            return m;
        };
    }

private:
    const Global& g_;
    std::map<std::string, std::string> store_hash_;
    std::map<std::string, std::vector<CycleRecord>> cycles_;
    std::map<Decomposition, FeatureMatrix> full_;
};

// ---- commands ------------------------------------------------------------------

struct IngestArgs {
    std::string data_dir;
    std::string scheme = "general";
    int target_rate = 8000;
    double max_seconds = 5.0;
    bool no_denoise = false;
};

void cmd_ingest(const Global& g, const IngestArgs& a) {
    if (a.data_dir.empty()) throw ConfigError("ingest needs --data-dir <directory of .wav + .txt files>");
    if (!fs::is_directory(a.data_dir)) throw DataError("data directory not found: " + a.data_dir);
    PreprocessConfig cfg;
    cfg.scheme = parse_scheme(a.scheme);
    cfg.target_rate_hz = a.target_rate;
    cfg.max_seconds = a.max_seconds;
    cfg.denoise = !a.no_denoise;
    if (cfg.target_rate_hz <= 0 || cfg.max_seconds <= 0) throw ConfigError("--target-rate and --max-seconds must be > 0");

    const auto dir = Workspace(g).store_dir(a.scheme);
    const json params{{"scheme", to_string(cfg.scheme)}, {"target_rate", cfg.target_rate_hz},
                      {"max_seconds", cfg.max_seconds}, {"denoise", cfg.denoise}};
    const Stamp stamp(dir / kManifestName, stage_key("ingest", params, hash_files(files_with(a.data_dir, {".wav", ".txt"}), a.data_dir)),
                      g.force);
    if (stamp.fresh()) {
        say("ingest: " + dir.string() + " up to date");
        return;
    }
    const auto load = load_corpus(a.data_dir, cfg, g.workers);
    if (load.recordings == 0) throw DataError("no .wav files with matching .txt annotations in " + a.data_dir);
    for (const auto& w : load.warnings) std::cerr << "ingest: warning: " << w << '\n';
    std::error_code ec;
    fs::remove_all(dir, ec);
    ensure_dir(dir);
    write_cycle_store(dir, load.cycles);
    stamp.commit();
    const auto crackles = std::count_if(load.cycles.begin(), load.cycles.end(),
                                        [](const CycleRecord& c) { return c.label == Label::Crackle; });
    say("ingest: " + std::to_string(load.recordings) + " recordings, " + std::to_string(load.cycles.size()) +
        " cycles (" + std::to_string(crackles) + " crackle), " + std::to_string(load.warnings.size()) +
        " warnings -> " + dir.string());
}

std::string method_name(BandMethod m) {
    switch (m) {
        case BandMethod::Raw: return "raw";
        case BandMethod::Emd: return "emd";
        case BandMethod::Eemd: return "eemd";
        case BandMethod::Dwt: return "dwt";
        case BandMethod::EmdDwt: return "emd+dwt";
        case BandMethod::EemdDwt: return "eemd+dwt";
    }
    return "unknown";
}

void dump_bands(const Global& g, Workspace& ws, const FeatureArgs& f, Decomposition d, const fs::path& out) {
    const auto& cycles = ws.cycles(f.scheme);
    FeatureBuildOptions opts;
    opts.decomposition = d;
    opts.decomposition_cfg = f.decomposition_cfg();
    opts.seed = g.seed;
    // Decompose in parallel a batch at a time; files are written from this thread only.
    const std::size_t batch = static_cast<std::size_t>(std::max(1, g.workers)) * 4;
    std::size_t written = 0, failed = 0;
    for (std::size_t start = 0; start < cycles.size(); start += batch) {
        const std::size_t n = std::min(batch, cycles.size() - start);
        std::vector<std::optional<BandSet>> sets(n);
        std::vector<std::string> errors(n);
        parallel_for(n, g.workers, [&](std::size_t i) {
            try {
                sets[i] = decompose_cycle(cycles[start + i], opts);
            } catch (const Error& e) {
                errors[i] = e.what();
            }
        });
        for (std::size_t i = 0; i < n; ++i) {
            const auto& cycle = cycles[start + i];
            if (!sets[i]) {
                std::cerr << "extract: warning: " << cycle.cycle_id << ": " << errors[i] << '\n';
                ++failed;
                continue;
            }
            const auto dir = out / cycle.cycle_id;
            ensure_dir(dir);
            json side{{"cycle_id", cycle.cycle_id}, {"decomposition", to_string(d)}, {"seed", g.seed}, {"bands", json::array()}};
            for (std::size_t b = 0; b < sets[i]->bands.size(); ++b) {
                const auto& tag = sets[i]->tags[b];
                char file[64];
                std::snprintf(file, sizeof file, "%02zu_%s.lsc", b, tag.name().c_str());
                write_lsc1(dir / file, sets[i]->bands[b], static_cast<int>(std::lround(tag.sample_rate_hz)));
                side["bands"].push_back({{"file", file},
                                         {"name", tag.name()},
                                         {"method", method_name(tag.method)},
                                         {"imf_index", tag.imf_index},
                                         {"dwt_level", tag.dwt_level},
                                         {"sample_rate_hz", tag.sample_rate_hz},
                                         {"low_hz", tag.low_hz},
                                         {"high_hz", tag.high_hz},
                                         {"samples", sets[i]->bands[b].size()}});
            }
            write_text(dir / "bands.json", side.dump(2) + "\n");
            ++written;
        }
    }
    say("extract: bands of " + std::to_string(written) + " cycles -> " + out.string() +
        (failed ? " (" + std::to_string(failed) + " failed)" : ""));
}

void cmd_extract(const Global& g, const FeatureArgs& f, const std::string& dump_dir) {
    Workspace ws(g);
    const auto d = parse_decomposition(f.decomposition);
    ws.features(f, d, parse_feature_set(f.feature_set));
    if (!dump_dir.empty()) dump_bands(g, ws, f, d, dump_dir);
}

std::string stem_of(const FeatureArgs& f) {
    return std::string(to_string(parse_scheme(f.scheme))) + "_" + std::string(to_string(parse_decomposition(f.decomposition))) +
           "_" + std::string(to_string(parse_feature_set(f.feature_set)));
}

std::string file_hash(const fs::path& p) { return Sha256().update_file(p.string()).hex_digest(); }

json selector_params(const SelectorArgs& s) {
    return {{"selector", s.selector}, {"output_dim", s.output_dim}, {"ae_hidden", s.ae.hidden},
            {"ae_epochs", s.ae.epochs}, {"ae_batch", s.ae.batch}, {"ae_lr", s.ae.learning_rate}};
}

void cmd_select(const Global& g, const FeatureArgs& f, const SelectorArgs& s) {
    Workspace ws(g);
    const auto d = parse_decomposition(f.decomposition);
    const auto set = parse_feature_set(f.feature_set);
    const auto spec = s.spec();
    const auto m = ws.features(f, d, set);
    const auto out = g.output_dir / "select" / (stem_of(f) + "_" + std::string(to_string(spec.kind)) + ".json");
    json params = selector_params(s);
    params["seed"] = g.seed;
    const Stamp stamp(out, stage_key("select", params, file_hash(ws.feature_path(f, d, set))), g.force);
    if (stamp.fresh()) {
        say("select: " + out.filename().string() + " up to date");
        return;
    }
    const auto scaling = minmax_fit(m.rows);
    const auto scaled = minmax_apply(scaling, m.rows);
    const auto model = fit_selector(spec, scaled, m.labels, derive_seed(g.seed, {2}));
    FeatureMatrix reduced;
    reduced.feature_names = model.output_names(m.feature_names);
    reduced.cycle_ids = m.cycle_ids;
    reduced.groups = m.groups;
    reduced.labels = m.labels;
    reduced.rows = model.transform(scaled);
    reduced.provenance = {{"source", ws.feature_path(f, d, set).filename().string()}, {"selector", to_string(spec.kind)}};
    auto csv = out;
    csv.replace_extension(".csv");
    write_feature_matrix(csv, reduced);
    write_text(out, json{{"feature_names", m.feature_names}, {"scaling", to_json(scaling)}, {"selector", to_json(model)}}.dump(2) + "\n");
    stamp.commit();
    say("select: " + std::to_string(m.width()) + " -> " + std::to_string(model.output_dim) + " features -> " + out.string());
}

ClassifierKind parse_kind(const std::string& s) { return parse_classifier(s); }

void cmd_train(const Global& g, const FeatureArgs& f, const SelectorArgs& s, const std::string& classifier,
               const std::string& params_text) {
    Workspace ws(g);
    const auto d = parse_decomposition(f.decomposition);
    const auto set = parse_feature_set(f.feature_set);
    const auto sel = s.spec();
    auto spec = spec_from_params(parse_kind(classifier), parse_json_arg(params_text, "--params"));
    spec.seed = derive_seed(g.seed, {1});
    spec.validate();
    const auto m = ws.features(f, d, set);
    const auto out = g.output_dir / "models" / (stem_of(f) + "_" + std::string(to_string(sel.kind)) + "_" + classifier + ".json");
    json params = selector_params(s);
    params["classifier"] = params_to_json(spec);
    params["kind"] = classifier;
    params["seed"] = g.seed;
    const Stamp stamp(out, stage_key("train", params, file_hash(ws.feature_path(f, d, set))), g.force);
    if (stamp.fresh()) {
        say("train: " + out.filename().string() + " up to date");
        return;
    }
    const auto pipe = fit_pipeline(m, sel, spec, derive_seed(g.seed, {2}));
    for (const auto& w : pipe.classifier->warnings()) std::cerr << "train: warning: " << w << '\n';
    const auto fit = compute_metrics(m.labels, pipe.predict(m.rows));
    write_text(out, pipe.to_json().dump() + "\n");
    stamp.commit();
    char acc[32];
    std::snprintf(acc, sizeof acc, "%.4f", fit.accuracy);
    say("train: " + spec.describe() + " on " + std::to_string(m.size()) + " cycles (training accuracy " + acc +
        ") -> " + out.string());
}

std::string format_metrics(const Metrics& m) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "accuracy %.4f  precision %.4f  recall %.4f  f1 %.4f", m.accuracy, m.precision,
                  m.recall, m.f1);
    return buf;
}

// Shared by evaluate and matrix: runs (or reuses) a report for `cfg`.
void run_report(const Global& g, Workspace& ws, const FeatureArgs& f, const ExperimentConfig& cfg,
                const fs::path& json_path, const std::string& stage) {
    auto csv_path = json_path;
    csv_path.replace_extension(".csv");
    json params = to_json(cfg);
    params["knobs"] = f.knobs();
    const Stamp stamp(csv_path, stage_key(stage, params, ws.store_hash(f.scheme)), g.force);
    if (stamp.fresh() && fs::exists(json_path)) {
        say(stage + ": " + csv_path.string() + " up to date");
        return;
    }
    const auto report = run_matrix(cfg, ws.provider(f));
    ensure_dir(json_path.parent_path());
    write_report(json_path, csv_path, report);
    stamp.commit();
    std::size_t failed = 0;
    for (const auto& c : report.cells) failed += !c.error.empty();
    say(stage + ": " + std::to_string(report.cells.size()) + " cells (" + std::to_string(failed) + " failed) -> " +
        csv_path.string());
    const std::size_t shown = std::min<std::size_t>(5, report.cells.size());
    for (std::size_t i = 0; i < shown; ++i) {
        const auto& c = report.cells[i];
        const std::string name = std::string(to_string(c.decomposition)) + "/" + std::string(to_string(c.feature_set)) +
                                 "/" + std::string(to_string(c.selector)) + "/" +
                                 (c.best ? c.best->describe() : std::string(to_string(c.classifier)));
        say("  " + std::to_string(i + 1) + ". " + name + "  " + (c.mean ? format_metrics(*c.mean) : "error: " + c.error));
    }
}

void cmd_evaluate(const Global& g, const FeatureArgs& f, const SelectorArgs& s, const CvArgs& cv,
                  const std::string& classifier, const std::string& params_text) {
    ExperimentConfig cfg;
    cfg.decompositions = {parse_decomposition(f.decomposition)};
    cfg.feature_sets = {parse_feature_set(f.feature_set)};
    cfg.selectors = {parse_selector(s.selector)};
    cfg.selector_output_dim = s.output_dim;
    cfg.autoencoder = s.ae;
    cfg.classifiers = {ClassifierGrid{parse_kind(classifier), parse_json_arg(params_text, "--params")}};
    cfg.k = cv.k;
    cfg.seed = g.seed;
    cfg.group_by_patient = cv.group_by_patient;
    cfg.paper_compat_scaling = cv.paper_compat_scaling;
    cfg.workers = g.workers;
    Workspace ws(g);
    run_report(g, ws, f, cfg,
               g.output_dir / "eval" / (stem_of(f) + "_" + std::string(to_string(cfg.selectors[0])) + "_" + classifier + ".json"),
               "evaluate");
}

struct MatrixArgs {
    std::vector<std::string> decompositions = {"none"};
    std::vector<std::string> feature_sets = {"full"};
    std::vector<std::string> selectors = {"none"};
    std::vector<std::string> classifiers = {"knn"};
    std::vector<std::string> grid;  ///< "kind.param=JSON"
};

void cmd_matrix(const Global& g, const FeatureArgs& f, const SelectorArgs& s, const CvArgs& cv, const MatrixArgs& a) {
    ExperimentConfig cfg;
    cfg.decompositions.clear();
    cfg.feature_sets.clear();
    cfg.selectors.clear();
    cfg.classifiers.clear();
    for (const auto& x : a.decompositions) cfg.decompositions.push_back(parse_decomposition(x));
    for (const auto& x : a.feature_sets) cfg.feature_sets.push_back(parse_feature_set(x));
    for (const auto& x : a.selectors) cfg.selectors.push_back(parse_selector(x));
    std::map<ClassifierKind, json> grids;
    for (const auto& entry : a.grid) {
        const auto dot = entry.find('.'), eq = entry.find('=');
        if (dot == std::string::npos || eq == std::string::npos || eq < dot) {
            throw ConfigError("--grid expects kind.param=JSON, e.g. knn.n_neighbors=[1,3,5]; got '" + entry + "'");
        }
        const auto kind = parse_kind(entry.substr(0, dot));
        auto& j = grids[kind];
        if (j.is_null()) j = json::object();
        j[entry.substr(dot + 1, eq - dot - 1)] = parse_json_arg(entry.substr(eq + 1), "--grid " + entry);
    }
    for (const auto& x : a.classifiers) {
        const auto kind = parse_kind(x);
        cfg.classifiers.push_back({kind, grids.count(kind) ? grids[kind] : json::object()});
    }
    for (const auto& [kind, _] : grids) {
        if (std::none_of(cfg.classifiers.begin(), cfg.classifiers.end(), [k = kind](const ClassifierGrid& c) { return c.kind == k; })) {
            throw ConfigError("--grid names " + std::string(to_string(kind)) + ", which is not in --classifiers");
        }
    }
    cfg.selector_output_dim = s.output_dim;
    cfg.autoencoder = s.ae;
    cfg.k = cv.k;
    cfg.seed = g.seed;
    cfg.group_by_patient = cv.group_by_patient;
    cfg.paper_compat_scaling = cv.paper_compat_scaling;
    cfg.workers = g.workers;
    cfg.validate();
    Workspace ws(g);
    run_report(g, ws, f, cfg, g.output_dir / "matrix" / "report.json", "matrix");
}

void cmd_report(const Global& g, const std::string& input, std::size_t top, const std::string& output) {
    const fs::path in = input.empty() ? g.output_dir / "matrix" / "report.json" : fs::path(input);
    if (!fs::exists(in)) throw DataError("no report at " + in.string() + "; run `auscult matrix` first or pass --input");
    json j;
    try {
        j = json::parse(read_text(in));
    } catch (const json::parse_error& e) {
        throw DataError("report " + in.string() + " is not valid JSON");
    }
    const auto csv = report_csv(report_from_json(j), top);
    if (output.empty()) std::cout << csv;
    else write_text(output, csv);
}

void cmd_synth(const Global& g, std::size_t cycles, const std::string& out, int rate) {
    const fs::path dir = out.empty() ? g.output_dir / "synthetic" : fs::path(out);
    SyntheticOptions opts;
    opts.sample_rate_hz = rate;
    const auto c = make_synthetic_corpus(cycles, g.seed, dir, opts);
    say("synth: " + std::to_string(c.wav_files.size()) + " recordings, " + std::to_string(c.crackle_cycles) + " crackle + " +
        std::to_string(c.quiet_cycles) + " quiet cycles -> " + dir.string());
}

// ---- configuration -------------------------------------------------------------

std::string env_name(const std::string& long_name) {
    std::string s = "AUSCULT_";
    for (char c : long_name) s += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

void attach_env(CLI::App* app) {
    for (auto* o : app->get_options()) {
        const auto& names = o->get_lnames();
        if (!names.empty() && names.front() != "help") o->envname(env_name(names.front()));
    }
    for (auto* sub : app->get_subcommands({})) attach_env(sub);
}

/// Applies a TOML file to options not already set on the command line or by
/// the environment. Top-level keys are global options; [section] tables hold
/// the options of the subcommand of that name.
void apply_config(CLI::App& app, const std::string& path) {
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigTOML().from_file(path);
    } catch (const CLI::FileError&) {
        throw ConfigError("config file not readable: " + path);
    } catch (const CLI::Error& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
    for (const auto& item : items) {
        if (item.name == "++" || item.name == "--") continue;  // section markers
        CLI::App* target = &app;
        std::string where;
        for (const auto& p : item.parents) {
            target = target->get_subcommand_no_throw(p);
            if (!target) throw ConfigError("config file " + path + ": unknown section [" + p + "]");
            where += p + ".";
        }
        std::string key = item.name;
        std::replace(key.begin(), key.end(), '_', '-');
        CLI::Option* opt = target->get_option_no_throw("--" + key);
        if (!opt || key == "config") {
            throw ConfigError("config file " + path + ": unknown key '" + where + item.name + "'");
        }
        if (target != &app && !target->parsed()) continue;  // another command's settings
        if (opt->count() > 0) continue;                      // command line or environment wins
        try {
            opt->add_result(item.inputs);
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw ConfigError("config file " + path + ": bad value for '" + where + item.name + "': " + e.what());
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Crackle detection in lung-sound recordings: ingest, features, selection, classifiers, evaluation."};
    app.require_subcommand(1);
    Global g;
    std::string output_dir = g.output_dir.string();
    app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--seed", g.seed, "Root seed for every random choice");
    app.add_option("--output-dir", output_dir, "Directory for stage artifacts");
    app.add_option("--config", g.config, "TOML config file (flags and AUSCULT_* variables override it)");
    app.add_flag("--force", g.force, "Recompute stages even when their stamps are current");

    IngestArgs ingest;
    auto* c_ingest = app.add_subcommand("ingest", "Slice annotated recordings into a cycle store");
    c_ingest->add_option("--data-dir", ingest.data_dir, "Directory of <stem>.wav + <stem>.txt");
    c_ingest->add_option("--scheme", ingest.scheme, "general|pure");
    c_ingest->add_option("--target-rate", ingest.target_rate, "Resample to this rate (Hz)");
    c_ingest->add_option("--max-seconds", ingest.max_seconds, "Keep at most this much of each cycle");
    c_ingest->add_flag("--no-denoise", ingest.no_denoise, "Skip wavelet denoising");

    FeatureArgs fx;
    std::string dump_dir;
    auto* c_extract = app.add_subcommand("extract", "Decompose cycles and extract a feature matrix");
    add_feature_options(c_extract, fx);
    c_extract->add_option("--dump-bands", dump_dir, "Also write every band as LSC1 files under this directory");

    FeatureArgs fs_sel;
    SelectorArgs sel;
    auto* c_select = app.add_subcommand("select", "Fit a feature selector on a whole feature matrix");
    add_feature_options(c_select, fs_sel);
    add_selector_options(c_select, sel, false);

    FeatureArgs ft;
    SelectorArgs st;
    std::string train_kind = "knn", train_params = "{}";
    auto* c_train = app.add_subcommand("train", "Fit scaling, selector and classifier on all cycles");
    add_feature_options(c_train, ft);
    add_selector_options(c_train, st, false);
    c_train->add_option("--classifier", train_kind, "knn|rf|svm|mlp|kmeans|som");
    c_train->add_option("--params", train_params, "Classifier parameters as a JSON object");

    FeatureArgs fe;
    SelectorArgs se;
    CvArgs cve;
    std::string eval_kind = "knn", eval_params = "{}";
    auto* c_eval = app.add_subcommand("evaluate", "Cross-validate one pipeline (array params form a grid)");
    add_feature_options(c_eval, fe);
    add_selector_options(c_eval, se, false);
    add_cv_options(c_eval, cve);
    c_eval->add_option("--classifier", eval_kind, "knn|rf|svm|mlp|kmeans|som");
    c_eval->add_option("--params", eval_params, "Classifier parameters as JSON; array values are searched");

    FeatureArgs fm;
    SelectorArgs sm;
    CvArgs cvm;
    MatrixArgs ma;
    auto* c_matrix = app.add_subcommand("matrix", "Evaluate every decomposition x feature set x selector x classifier");
    add_decomposition_options(c_matrix, fm);
    add_selector_options(c_matrix, sm, true);
    add_cv_options(c_matrix, cvm);
    c_matrix->add_option("--decompositions", ma.decompositions, "Comma-separated decompositions")->delimiter(',');
    c_matrix->add_option("--feature-sets", ma.feature_sets, "Comma-separated feature sets")->delimiter(',');
    c_matrix->add_option("--selectors", ma.selectors, "Comma-separated selectors")->delimiter(',');
    c_matrix->add_option("--classifiers", ma.classifiers, "Comma-separated classifiers")->delimiter(',');
    c_matrix->add_option("--grid", ma.grid, "Hyperparameter axis kind.param=JSON, e.g. knn.n_neighbors=[1,3]");

    std::string report_in, report_out;
    std::size_t top = 0;
    auto* c_report = app.add_subcommand("report", "Render a stored report as a CSV table");
    c_report->add_option("--input", report_in, "Report JSON (default <output-dir>/matrix/report.json)");
    c_report->add_option("--top", top, "Only the best N cells (0 = all)");
    c_report->add_option("--output", report_out, "Write the CSV here instead of stdout");

    std::size_t synth_cycles = 200;
    std::string synth_out;
    int synth_rate = SyntheticOptions{}.sample_rate_hz;
    auto* c_synth = app.add_subcommand("synth", "Write a synthetic crackle corpus in the ingest format");
    c_synth->add_option("--cycles", synth_cycles, "Number of cycles (even)");
    c_synth->add_option("--out", synth_out, "Output directory (default <output-dir>/synthetic)");
    c_synth->add_option("--rate", synth_rate, "Sample rate (Hz)");

    attach_env(&app);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (!g.config.empty()) apply_config(app, g.config);
        g.output_dir = output_dir;
        if (g.workers < 1) throw ConfigError("--workers must be >= 1");
        if (c_ingest->parsed()) cmd_ingest(g, ingest);
        else if (c_extract->parsed()) cmd_extract(g, fx, dump_dir);
        else if (c_select->parsed()) cmd_select(g, fs_sel, sel);
        else if (c_train->parsed()) cmd_train(g, ft, st, train_kind, train_params);
        else if (c_eval->parsed()) cmd_evaluate(g, fe, se, cve, eval_kind, eval_params);
        else if (c_matrix->parsed()) cmd_matrix(g, fm, sm, cvm, ma);
        else if (c_report->parsed()) cmd_report(g, report_in, top, report_out);
        else if (c_synth->parsed()) cmd_synth(g, synth_cycles, synth_out, synth_rate);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "auscult: error: " << e.what() << '\n';
        return 1;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "auscult: error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "auscult: error: " << e.what() << '\n';
        return 2;
    }
}
