#include "cfdr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "cfdr/check.hpp"
#include "cfdr/csv.hpp"
#include "cfdr/datagen.hpp"

namespace cfdr {

namespace {

using nlohmann::json;

const char* source_name(DataSource s) {
    switch (s) {
        case DataSource::ConfoundedBinary: return "confounded_binary";
        case DataSource::FactoredContinuous: return "factored_continuous";
        case DataSource::Csv: return "csv";
    }
    fail("unknown data source");
}

DataSource source_from_name(const std::string& s) {
    if (s == "confounded_binary") return DataSource::ConfoundedBinary;
    if (s == "factored_continuous") return DataSource::FactoredContinuous;
    if (s == "csv") return DataSource::Csv;
    fail("unknown dataset source '" + s + "'");
}

const char* outcome_name(OutcomeKind k) {
    return k == OutcomeKind::Binary ? "binary" : "continuous";
}

OutcomeKind outcome_from_name(const std::string& s) {
    if (s == "binary") return OutcomeKind::Binary;
    if (s == "continuous") return OutcomeKind::Continuous;
    fail("unknown outcome kind '" + s + "'");
}

void check_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
    CFDR_CHECK(j.is_object(), where << ": expected an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        CFDR_CHECK(ok, where << ": unknown key '" << key << "'");
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

json split_to_json(const SplitSpec& s) {
    return json{{"train", s.train}, {"validation", s.validation}, {"test", s.test}};
}

void split_from_json(const json& j, SplitSpec& s) {
    check_keys(j, "split", {"train", "validation", "test"});
    get_if(j, "train", s.train);
    get_if(j, "validation", s.validation);
    get_if(j, "test", s.test);
}

json vae_to_json(const VaeConfig& c) {
    return json{{"trunk_width", c.trunk_width},
                {"trunk_layers", c.trunk_layers},
                {"latent_dims", c.latent_dims},
                {"decoder_width", c.decoder_width},
                {"decoder_layers", c.decoder_layers},
                {"lr", c.lr}};
}

void vae_from_json(const json& j, VaeConfig& c) {
    check_keys(j, "vae",
               {"trunk_width", "trunk_layers", "latent_dims", "decoder_width", "decoder_layers",
                "lr"});
    get_if(j, "trunk_width", c.trunk_width);
    get_if(j, "trunk_layers", c.trunk_layers);
    get_if(j, "latent_dims", c.latent_dims);
    get_if(j, "decoder_width", c.decoder_width);
    get_if(j, "decoder_layers", c.decoder_layers);
    get_if(j, "lr", c.lr);
}

json gan_to_json(const GanConfig& c) {
    return json{{"z_g_dim", c.z_g_dim},   {"gen_width", c.gen_width},
                {"dsc_width", c.dsc_width}, {"dsc_layers", c.dsc_layers},
                {"q_width", c.q_width},   {"q_layers", c.q_layers},
                {"gamma", c.gamma},       {"lambda", c.lambda},
                {"lr_g", c.lr_g},         {"lr_d", c.lr_d},
                {"epochs", c.epochs},     {"batch_size", c.batch_size}};
}

void gan_from_json(const json& j, GanConfig& c) {
    check_keys(j, "gan",
               {"z_g_dim", "gen_width", "dsc_width", "dsc_layers", "q_width", "q_layers", "gamma",
                "lambda", "lr_g", "lr_d", "epochs", "batch_size"});
    get_if(j, "z_g_dim", c.z_g_dim);
    get_if(j, "gen_width", c.gen_width);
    get_if(j, "dsc_width", c.dsc_width);
    get_if(j, "dsc_layers", c.dsc_layers);
    get_if(j, "q_width", c.q_width);
    get_if(j, "q_layers", c.q_layers);
    get_if(j, "gamma", c.gamma);
    get_if(j, "lambda", c.lambda);
    get_if(j, "lr_g", c.lr_g);
    get_if(j, "lr_d", c.lr_d);
    get_if(j, "epochs", c.epochs);
    get_if(j, "batch_size", c.batch_size);
}

json dr_to_json(const DrConfig& c) {
    return json{{"trunk_dims", c.trunk_dims},
                {"head_dims", c.head_dims},
                {"propensity_dims", c.propensity_dims},
                {"regressor_dims", c.regressor_dims},
                {"alpha", c.alpha},
                {"beta", c.beta},
                {"eps_clip", c.eps_clip},
                {"lr", c.lr},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size}};
}

void dr_from_json(const json& j, DrConfig& c) {
    check_keys(j, "dr",
               {"trunk_dims", "head_dims", "propensity_dims", "regressor_dims", "alpha", "beta",
                "eps_clip", "lr", "epochs", "batch_size"});
    get_if(j, "trunk_dims", c.trunk_dims);
    get_if(j, "head_dims", c.head_dims);
    get_if(j, "propensity_dims", c.propensity_dims);
    get_if(j, "regressor_dims", c.regressor_dims);
    get_if(j, "alpha", c.alpha);
    get_if(j, "beta", c.beta);
    get_if(j, "eps_clip", c.eps_clip);
    get_if(j, "lr", c.lr);
    get_if(j, "epochs", c.epochs);
    get_if(j, "batch_size", c.batch_size);
}

json config_to_json_obj(const ExperimentConfig& cfg) {
    json dataset = {{"source", source_name(cfg.source)},
                    {"n", cfg.n},
                    {"csv_path", cfg.csv_path},
                    {"schema_path", cfg.schema_path},
                    {"outcome", outcome_name(cfg.csv_outcome)}};
    return json{{"name", cfg.name},
                {"dataset", dataset},
                {"split", split_to_json(cfg.split)},
                {"vae", vae_to_json(cfg.vae)},
                {"gan", gan_to_json(cfg.gan)},
                {"dr", dr_to_json(cfg.dr)},
                {"realizations", cfg.realizations},
                {"base_seed", cfg.base_seed},
                {"without_dr_loss", cfg.without_dr_loss},
                {"without_info_loss", cfg.without_info_loss},
                {"jobs", cfg.jobs},
                {"output_dir", cfg.output_dir}};
}

void validate_config(const ExperimentConfig& cfg) {
    CFDR_CHECK(cfg.realizations >= 1, "config: realizations must be >= 1");
    CFDR_CHECK(cfg.jobs >= 1, "config: jobs must be >= 1");
    if (cfg.source == DataSource::Csv) {
        CFDR_CHECK(!cfg.csv_path.empty(), "config: csv source needs a csv_path");
    } else {
        CFDR_CHECK(cfg.n >= 10, "config: synthetic n must be >= 10");
    }
}

std::string expand_realization(const std::string& path, int r) {
    std::string out = path;
    const std::string tag = "{r}";
    for (std::size_t pos = out.find(tag); pos != std::string::npos; pos = out.find(tag, pos))
        out.replace(pos, tag.size(), std::to_string(r));
    return out;
}

Dataset make_dataset(const ExperimentConfig& cfg, int r, uint64_t seed) {
    switch (cfg.source) {
        case DataSource::ConfoundedBinary:
            return gen_confounded_binary(cfg.n, seed);
        case DataSource::FactoredContinuous:
            return gen_factored_continuous(cfg.n, seed);
        case DataSource::Csv: {
            const Schema schema = cfg.schema_path.empty() ? Schema::standard(cfg.csv_outcome)
                                                          : load_schema(cfg.schema_path);
            return load_csv(expand_realization(cfg.csv_path, r), schema);
        }
    }
    fail("unknown data source");
}

MetricSet score_split(const DrModel& m, const Dataset& ds) {
    const DrPredictions p = predict(m, ds.x, Tensor::column(ds.t));
    MetricSet ms = evaluate(make_eval_input(ds, p.y0.col(0), p.y1.col(0)));
    // The estimator's own treatment-effect readout, from the observed
    // outcomes and the learned nuisances.
    ms.ate_dr = dr_ate_estimate(ds.y_f, ds.t, p.pi.col(0), p.mu.col(0));
    return ms;
}

// Metric columns shared by the aggregate table and results.csv; fixed order.
struct MetricColumn {
    const char* name;
    std::optional<double> (*get)(const MetricSet&);
};

constexpr MetricColumn kColumns[] = {
    {"pehe_rmse", [](const MetricSet& m) { return m.pehe_rmse; }},
    {"eps_ate", [](const MetricSet& m) { return m.eps_ate; }},
    {"ate_abs_err", [](const MetricSet& m) { return m.ate_abs; }},
    {"ate_true", [](const MetricSet& m) { return m.ate_true; }},
    {"ate_model", [](const MetricSet& m) { return m.ate_model; }},
    {"ate_dr", [](const MetricSet& m) { return m.ate_dr; }},
    {"r_pol", [](const MetricSet& m) { return m.r_pol; }},
    {"att", [](const MetricSet& m) { return m.att; }},
    {"eps_att", [](const MetricSet& m) { return m.eps_att; }},
    {"factual_rmse", [](const MetricSet& m) { return std::optional<double>(m.factual_rmse); }},
};

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    CFDR_CHECK(out.good(), "cannot open '" << path << "' for writing");
    out << text;
    out.flush();
    CFDR_CHECK(out.good(), "write failed for '" << path << "'");
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(std::string("config parse error: ") + e.what());
    }
    check_keys(j, "config",
               {"name", "dataset", "split", "vae", "gan", "dr", "realizations", "base_seed",
                "without_dr_loss", "without_info_loss", "jobs", "output_dir"});
    ExperimentConfig cfg;
    try {
        get_if(j, "name", cfg.name);
        if (auto it = j.find("dataset"); it != j.end()) {
            check_keys(*it, "dataset", {"source", "n", "csv_path", "schema_path", "outcome"});
            std::string source = source_name(cfg.source);
            std::string outcome = outcome_name(cfg.csv_outcome);
            get_if(*it, "source", source);
            get_if(*it, "n", cfg.n);
            get_if(*it, "csv_path", cfg.csv_path);
            get_if(*it, "schema_path", cfg.schema_path);
            get_if(*it, "outcome", outcome);
            cfg.source = source_from_name(source);
            cfg.csv_outcome = outcome_from_name(outcome);
        }
        if (auto it = j.find("split"); it != j.end()) split_from_json(*it, cfg.split);
        if (auto it = j.find("vae"); it != j.end()) vae_from_json(*it, cfg.vae);
        if (auto it = j.find("gan"); it != j.end()) gan_from_json(*it, cfg.gan);
        if (auto it = j.find("dr"); it != j.end()) dr_from_json(*it, cfg.dr);
        get_if(j, "realizations", cfg.realizations);
        get_if(j, "base_seed", cfg.base_seed);
        get_if(j, "without_dr_loss", cfg.without_dr_loss);
        get_if(j, "without_info_loss", cfg.without_info_loss);
        get_if(j, "jobs", cfg.jobs);
        get_if(j, "output_dir", cfg.output_dir);
    } catch (const json::exception& e) {
        fail(std::string("config field error: ") + e.what());
    }
    validate_config(cfg);
    return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
    return config_to_json_obj(cfg).dump(2) + "\n";
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    CFDR_CHECK(in.good(), "cannot open config '" << path << "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return config_from_json(buf.str());
}

void save_experiment_config(const ExperimentConfig& cfg, const std::string& path) {
    write_text_file(path, config_to_json(cfg));
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
    // FNV-1a, 64 bit, over the canonical dump (keys are emitted sorted).
    const std::string text = config_to_json_obj(cfg).dump();
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

RealizationRecord run_realization(const ExperimentConfig& cfg, int realization) {
    RealizationRecord rec;
    rec.realization = realization;
    rec.seed = cfg.base_seed + static_cast<uint64_t>(realization);

    Dataset ds = make_dataset(cfg, realization, rec.seed);
    SplitSpec sp = cfg.split;
    sp.seed = rec.seed;
    const Splits s = split(ds, sp);

    VaeModel vae = build_vae(ds.d(), cfg.vae, rec.seed, ds.x_binary);
    GanConfig gan_cfg = cfg.gan;
    if (cfg.without_info_loss) gan_cfg.lambda = 0.0;
    CounterfactualGan gan =
        build_cfgan(ds.d(), cfg.vae.latent_total(), ds.outcome_kind, gan_cfg, rec.seed);
    train_counterfactual_gan(vae, gan, s.train, rec.seed);

    const Dataset completed =
        with_generated_counterfactuals(s.train, complete_dataset(gan, vae, s.train, rec.seed));

    DrConfig dr_cfg = cfg.dr;
    if (cfg.without_dr_loss) dr_cfg.beta = 0.0;
    DrModel dr = build_dr(ds.d(), ds.outcome_kind, dr_cfg, rec.seed);
    train_dr(dr, completed, s.validation, rec.seed);

    rec.in_sample = score_split(dr, s.train);
    rec.out_sample = score_split(dr, s.test);
    return rec;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const auto start = std::chrono::steady_clock::now();

    RunResult res;
    res.cfg = cfg;
    res.fingerprint = config_fingerprint(cfg);
    res.records.resize(static_cast<std::size_t>(cfg.realizations));

    const auto run_one = [&](int r) {
        try {
            res.records[static_cast<std::size_t>(r)] = run_realization(cfg, r);
        } catch (const std::exception& e) {
            RealizationRecord rec;
            rec.realization = r;
            rec.seed = cfg.base_seed + static_cast<uint64_t>(r);
            rec.failed = true;
            rec.error = e.what();
            res.records[static_cast<std::size_t>(r)] = rec;
        }
    };

    const int workers = std::min(cfg.jobs, cfg.realizations);
    if (workers <= 1) {
        for (int r = 0; r < cfg.realizations; ++r) run_one(r);
    } else {
        // Each realization owns its models and writes only its own slot, so
        // the result cannot depend on scheduling.
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int r = next.fetch_add(1); r < cfg.realizations; r = next.fetch_add(1))
                    run_one(r);
            });
        for (auto& th : pool) th.join();
    }

    for (const auto& rec : res.records)
        if (rec.failed) ++res.failed_count;
    if (2 * res.failed_count > cfg.realizations) {
        std::string first;
        for (const auto& rec : res.records)
            if (rec.failed) {
                first = rec.error;
                break;
            }
        fail("experiment: " + std::to_string(res.failed_count) + " of " +
             std::to_string(cfg.realizations) + " realizations failed; first error: " + first);
    }

    res.aggregate = aggregate_records(res.records);
    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

std::vector<AggregateRow> aggregate_records(const std::vector<RealizationRecord>& records) {
    std::vector<AggregateRow> rows;
    const auto add_rows = [&](const char* prefix,
                              const MetricSet& (*pick)(const RealizationRecord&)) {
        for (const auto& col : kColumns) {
            std::vector<double> values;
            for (const auto& rec : records) {
                if (rec.failed) continue;
                if (const auto v = col.get(pick(rec))) values.push_back(*v);
            }
            if (values.empty()) continue;
            AggregateRow row;
            row.metric = std::string(prefix) + col.name;
            row.count = static_cast<int>(values.size());
            double s = 0.0;
            for (double v : values) s += v;
            row.mean = s / static_cast<double>(values.size());
            if (values.size() > 1) {
                double sq = 0.0;
                for (double v : values) sq += (v - row.mean) * (v - row.mean);
                row.stddev = std::sqrt(sq / static_cast<double>(values.size()));
            }
            rows.push_back(std::move(row));
        }
    };
    add_rows("in_", [](const RealizationRecord& r) -> const MetricSet& { return r.in_sample; });
    add_rows("out_", [](const RealizationRecord& r) -> const MetricSet& { return r.out_sample; });
    return rows;
}

CompareCounts compare_dr_vs_nondr(const RunResult& first, const RunResult& second) {
    CFDR_CHECK(first.records.size() == second.records.size(),
               "compare: realization counts differ, " << first.records.size() << " vs "
                                                      << second.records.size());
    CFDR_CHECK(!first.records.empty(), "compare: no realizations");
    CompareCounts c;
    for (std::size_t i = 0; i < first.records.size(); ++i) {
        const auto& a = first.records[i];
        const auto& b = second.records[i];
        CFDR_CHECK(a.seed == b.seed, "compare: seeds not paired at realization " << i);
        if (a.failed || b.failed) {
            ++c.skipped;
            continue;
        }
        const double fa = a.out_sample.factual_rmse;
        const double fb = b.out_sample.factual_rmse;
        if (fa < fb)
            ++c.first_wins;
        else if (fb < fa)
            ++c.second_wins;
        else
            ++c.ties;
    }
    return c;
}

void write_report(const RunResult& res, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    CFDR_CHECK(!ec, "cannot create report directory '" << dir << "': " << ec.message());

    std::ostringstream csv;
    csv << "realization,seed,failed";
    for (const char* prefix : {"in_", "out_"})
        for (const auto& col : kColumns) csv << ',' << prefix << col.name;
    csv << '\n';
    for (const auto& rec : res.records) {
        csv << rec.realization << ',' << rec.seed << ',' << (rec.failed ? 1 : 0);
        for (const MetricSet* m : {&rec.in_sample, &rec.out_sample})
            for (const auto& col : kColumns) {
                csv << ',';
                if (rec.failed) continue;
                if (const auto v = col.get(*m)) csv << format_double(*v);
            }
        csv << '\n';
    }
    write_text_file(dir + "/results.csv", csv.str());

    json summary;
    summary["name"] = res.cfg.name;
    summary["fingerprint"] = res.fingerprint;
    summary["realizations"] = static_cast<int>(res.records.size());
    summary["failed_realizations"] = res.failed_count;
    json failures = json::array();
    for (const auto& rec : res.records)
        if (rec.failed) failures.push_back({{"realization", rec.realization}, {"error", rec.error}});
    summary["failures"] = failures;
    json aggregate = json::array();
    for (const auto& row : res.aggregate)
        aggregate.push_back({{"metric", row.metric},
                             {"mean", row.mean},
                             {"stddev", row.stddev},
                             {"count", row.count}});
    summary["aggregate"] = aggregate;
    write_text_file(dir + "/summary.json", summary.dump(2) + "\n");

    save_experiment_config(res.cfg, dir + "/config.json");

    // Wall clock varies run to run, so it lives outside the three files the
    // determinism guarantee covers.
    write_text_file(dir + "/timing.txt", "wall_seconds " + format_double(res.wall_seconds) + "\n");
}

}  // namespace cfdr
