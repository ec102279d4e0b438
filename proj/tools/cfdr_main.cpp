#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfdr/cfgan.hpp"
#include "cfdr/check.hpp"
#include "cfdr/csv.hpp"
#include "cfdr/datagen.hpp"
#include "cfdr/dataset.hpp"
#include "cfdr/drhead.hpp"
#include "cfdr/experiment.hpp"
#include "cfdr/metrics.hpp"
#include "cfdr/vae.hpp"

namespace {

using namespace cfdr;

struct DataFlags {
    std::string process = "confounded_binary";
    int n = 1000;
    uint64_t seed = 1;
    std::string csv;
    std::string schema;
    std::string outcome = "continuous";
};

void add_data_flags(CLI::App* cmd, DataFlags& f, bool with_csv) {
    cmd->add_option("--process", f.process,
                    "synthetic process: confounded_binary or factored_continuous")
        ->capture_default_str();
    cmd->add_option("--n", f.n, "synthetic sample size")->capture_default_str();
    cmd->add_option("--seed", f.seed, "random seed")->capture_default_str();
    if (with_csv) {
        cmd->add_option("--csv", f.csv, "load a CSV file instead of generating");
        cmd->add_option("--schema", f.schema, "schema file describing the CSV columns");
        cmd->add_option("--outcome", f.outcome,
                        "outcome kind when --csv is used without --schema: continuous or binary")
            ->capture_default_str();
    }
}

OutcomeKind parse_outcome(const std::string& s) {
    if (s == "continuous") return OutcomeKind::Continuous;
    if (s == "binary") return OutcomeKind::Binary;
    fail("unknown outcome kind '" + s + "' (continuous or binary)");
}

Dataset make_data(const DataFlags& f) {
    if (!f.csv.empty()) {
        const Schema s =
            f.schema.empty() ? Schema::standard(parse_outcome(f.outcome)) : load_schema(f.schema);
        return load_csv(f.csv, s);
    }
    if (f.process == "confounded_binary") return gen_confounded_binary(f.n, f.seed);
    if (f.process == "factored_continuous") return gen_factored_continuous(f.n, f.seed);
    fail("unknown process '" + f.process +
         "' (confounded_binary or factored_continuous)");
}

void print_metric_line(const char* name, double v) { std::printf("  %-14s %.6g\n", name, v); }

void print_metrics(const char* label, const MetricSet& m) {
    std::printf("%s\n", label);
    if (m.pehe_rmse) print_metric_line("pehe_rmse", *m.pehe_rmse);
    if (m.eps_ate) print_metric_line("eps_ate", *m.eps_ate);
    if (m.ate_abs) print_metric_line("ate_abs_err", *m.ate_abs);
    if (m.ate_true) print_metric_line("ate_true", *m.ate_true);
    if (m.ate_model) print_metric_line("ate_model", *m.ate_model);
    if (m.ate_dr) print_metric_line("ate_dr", *m.ate_dr);
    if (m.r_pol) print_metric_line("r_pol", *m.r_pol);
    if (m.att) print_metric_line("att", *m.att);
    if (m.eps_att) print_metric_line("eps_att", *m.eps_att);
    print_metric_line("factual_rmse", m.factual_rmse);
}

int print_stride(std::size_t epochs) {
    return epochs <= 10 ? 1 : static_cast<int>((epochs + 9) / 10);
}

int cmd_generate(const DataFlags& f, const std::string& out) {
    const Dataset ds = make_data(f);
    write_csv(ds, out);
    std::printf("wrote %d rows, %d covariates to %s\n", ds.n(), ds.d(), out.c_str());
    return 0;
}

struct TrainFlags {
    std::string config;
    std::optional<int> gan_epochs, dr_epochs;
    std::optional<double> gamma, lambda, alpha, beta;
};

ExperimentConfig config_for_train(const TrainFlags& tf, const DataFlags& df) {
    ExperimentConfig cfg;
    if (!tf.config.empty()) cfg = load_experiment_config(tf.config);
    if (!df.csv.empty()) {
        cfg.source = DataSource::Csv;
        cfg.csv_path = df.csv;
        cfg.schema_path = df.schema;
        cfg.csv_outcome = parse_outcome(df.outcome);
    } else if (tf.config.empty()) {
        cfg.source = df.process == "factored_continuous" ? DataSource::FactoredContinuous
                                                         : DataSource::ConfoundedBinary;
        if (df.process != "confounded_binary" && df.process != "factored_continuous")
            fail("unknown process '" + df.process + "'");
        cfg.n = df.n;
    }
    cfg.base_seed = df.seed;
    if (tf.gan_epochs) cfg.gan.epochs = *tf.gan_epochs;
    if (tf.dr_epochs) cfg.dr.epochs = *tf.dr_epochs;
    if (tf.gamma) cfg.gan.gamma = *tf.gamma;
    if (tf.lambda) cfg.gan.lambda = *tf.lambda;
    if (tf.alpha) cfg.dr.alpha = *tf.alpha;
    if (tf.beta) cfg.dr.beta = *tf.beta;
    return cfg;
}

// Single realization with the losses printed; same pipeline the experiment
// loop runs, unrolled so the histories are visible.
int cmd_train(const ExperimentConfig& cfg) {
    const uint64_t seed = cfg.base_seed;
    Dataset ds = [&] {
        DataFlags f;
        switch (cfg.source) {
            case DataSource::ConfoundedBinary: f.process = "confounded_binary"; break;
            case DataSource::FactoredContinuous: f.process = "factored_continuous"; break;
            case DataSource::Csv:
                f.csv = cfg.csv_path;
                f.schema = cfg.schema_path;
                f.outcome = cfg.csv_outcome == OutcomeKind::Binary ? "binary" : "continuous";
                break;
        }
        f.n = cfg.n;
        f.seed = seed;
        return make_data(f);
    }();
    std::printf("data: %d rows, %d covariates\n", ds.n(), ds.d());

    SplitSpec sp = cfg.split;
    sp.seed = seed;
    const Splits s = split(ds, sp);
    std::printf("split: %d train, %d validation, %d test\n", s.train.n(),
                s.validation_idx.empty() ? 0 : s.validation.n(), s.test.n());

    VaeModel vae = build_vae(ds.d(), cfg.vae, seed, ds.x_binary);
    GanConfig gan_cfg = cfg.gan;
    if (cfg.without_info_loss) gan_cfg.lambda = 0.0;
    CounterfactualGan gan =
        build_cfgan(ds.d(), cfg.vae.latent_total(), ds.outcome_kind, gan_cfg, seed);
    std::printf("latent model: %zu parameters; adversarial pair: %zu parameters\n",
                vae.param_count(), gan.param_count());

    const GanTrainResult gh = train_counterfactual_gan(vae, gan, s.train, seed);
    const int gs = print_stride(gh.history.size());
    for (std::size_t e = 0; e < gh.history.size(); ++e) {
        if (e % static_cast<std::size_t>(gs) && e + 1 != gh.history.size()) continue;
        const auto& h = gh.history[e];
        std::printf("gan epoch %3zu  vae %.4f  d %.4f  g_adv %.4f  g_sup %.4f  g_info %.4f\n",
                    e + 1, h.vae_total, h.d_loss, h.g_adversarial, h.g_supervised, h.g_info);
    }

    const Dataset completed =
        with_generated_counterfactuals(s.train, complete_dataset(gan, vae, s.train, seed));

    DrConfig dr_cfg = cfg.dr;
    if (cfg.without_dr_loss) dr_cfg.beta = 0.0;
    DrModel dr = build_dr(ds.d(), ds.outcome_kind, dr_cfg, seed);
    const DrTrainResult dh = train_dr(dr, completed, s.validation, seed);
    const int dsd = print_stride(dh.history.size());
    for (std::size_t e = 0; e < dh.history.size(); ++e) {
        if (e % static_cast<std::size_t>(dsd) && e + 1 != dh.history.size()) continue;
        const auto& h = dh.history[e];
        std::printf("dr epoch %3zu  predicted %.4f  dr %.4f  total %.4f  val_mse %.4f\n", e + 1,
                    h.predicted, h.dr, h.total, h.validation_factual_mse);
    }
    if (dh.selected_epoch >= 0)
        std::printf("kept parameters from epoch %d\n", dh.selected_epoch + 1);

    const auto score = [&](const Dataset& part) {
        const DrPredictions p = predict(dr, part.x, Tensor::column(part.t));
        MetricSet ms = evaluate(make_eval_input(part, p.y0.col(0), p.y1.col(0)));
        ms.ate_dr = dr_ate_estimate(part.y_f, part.t, p.pi.col(0), p.mu.col(0));
        return ms;
    };
    print_metrics("in-sample (train):", score(s.train));
    print_metrics("out-of-sample (test):", score(s.test));
    return 0;
}

int cmd_experiment(const ExperimentConfig& cfg, bool compare_without_dr) {
    const RunResult res = run_experiment(cfg);
    write_report(res, cfg.output_dir);
    std::printf("%s: %d realizations, %d failed, %.1fs\n", cfg.name.c_str(),
                static_cast<int>(res.records.size()), res.failed_count, res.wall_seconds);
    for (const auto& row : res.aggregate)
        std::printf("  %-18s %.4f ± %.4f  (n=%d)\n", row.metric.c_str(), row.mean, row.stddev,
                    row.count);
    std::printf("report written to %s\n", cfg.output_dir.c_str());

    if (compare_without_dr) {
        ExperimentConfig ablated = cfg;
        ablated.without_dr_loss = true;
        ablated.name = cfg.name + "_without_dr";
        ablated.output_dir = cfg.output_dir + "_without_dr";
        const RunResult ares = run_experiment(ablated);
        write_report(ares, ablated.output_dir);
        const CompareCounts c = compare_dr_vs_nondr(res, ares);
        std::printf("factual-error comparison (out-of-sample): with dr %d, without dr %d, ties %d",
                    c.first_wins, c.second_wins, c.ties);
        if (c.skipped) std::printf(", skipped %d", c.skipped);
        std::printf("\n");
    }
    return 0;
}

// Predictions file: header with yhat0 and yhat1 columns, extra columns ignored.
void load_predictions(const std::string& path, std::vector<double>& yhat0,
                      std::vector<double>& yhat1) {
    std::ifstream in(path, std::ios::binary);
    CFDR_CHECK(in.good(), "cannot open predictions '" << path << "'");
    std::string line;
    CFDR_CHECK(std::getline(in, line), "predictions '" << path << "': empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header;
    {
        std::istringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    int c0 = -1, c1 = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "yhat0") c0 = static_cast<int>(i);
        if (header[i] == "yhat1") c1 = static_cast<int>(i);
    }
    CFDR_CHECK(c0 >= 0 && c1 >= 0,
               "predictions '" << path << "': header must contain yhat0 and yhat1");
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        CFDR_CHECK(cells.size() == header.size(),
                   "predictions '" << path << "' row " << row << ": expected " << header.size()
                                   << " cells, got " << cells.size());
        const auto num = [&](int c) {
            char* end = nullptr;
            const double v = std::strtod(cells[static_cast<std::size_t>(c)].c_str(), &end);
            CFDR_CHECK(end && *end == '\0' && !cells[static_cast<std::size_t>(c)].empty(),
                       "predictions '" << path << "' row " << row << ": bad number '"
                                       << cells[static_cast<std::size_t>(c)] << "'");
            return v;
        };
        yhat0.push_back(num(c0));
        yhat1.push_back(num(c1));
    }
    CFDR_CHECK(!yhat0.empty(), "predictions '" << path << "': no data rows");
}

int cmd_metrics(const std::string& pred_path, const DataFlags& truth) {
    CFDR_CHECK(!truth.csv.empty(), "metrics needs --truth");
    const Dataset ds = make_data(truth);
    std::vector<double> yhat0, yhat1;
    load_predictions(pred_path, yhat0, yhat1);
    CFDR_CHECK(static_cast<int>(yhat0.size()) == ds.n(),
               "predictions have " << yhat0.size() << " rows, truth has " << ds.n());
    print_metrics("metrics:", evaluate(make_eval_input(ds, yhat0, yhat1)));
    return 0;
}

// Posterior means of every latent factor for each row, after a short
// co-training run; intended for downstream embedding plots.
int cmd_dump_latents(const DataFlags& f, int gan_epochs, const std::string& out) {
    const Dataset ds = make_data(f);
    VaeModel vae = build_vae(ds.d(), VaeConfig{}, f.seed, ds.x_binary);
    GanConfig gan_cfg;
    gan_cfg.epochs = gan_epochs;
    CounterfactualGan gan =
        build_cfgan(ds.d(), vae.cfg.latent_total(), ds.outcome_kind, gan_cfg, f.seed);
    train_counterfactual_gan(vae, gan, ds, f.seed);

    const PosteriorParams post = encode(vae, ds.x);
    std::ofstream o(out, std::ios::binary);
    CFDR_CHECK(o.good(), "cannot open '" << out << "' for writing");
    const char* factor[4] = {"zx", "zt", "zyf", "zycf"};
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < post.mean[static_cast<std::size_t>(k)].cols; ++j)
            o << factor[k] << j + 1 << ',';
    o << "t,y_f\n";
    char buf[64];
    for (int i = 0; i < ds.n(); ++i) {
        for (int k = 0; k < 4; ++k) {
            const Tensor& m = post.mean[static_cast<std::size_t>(k)];
            for (int j = 0; j < m.cols; ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g,", m.at(i, j));
                o << buf;
            }
        }
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", ds.t[static_cast<std::size_t>(i)],
                      ds.y_f[static_cast<std::size_t>(i)]);
        o << buf;
    }
    o.flush();
    CFDR_CHECK(o.good(), "write failed for '" << out << "'");
    std::printf("wrote latent means for %d rows to %s\n", ds.n(), out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"counterfactual outcome and treatment-effect estimation toolkit"};
    app.require_subcommand(1);

    DataFlags gen_flags;
    std::string gen_out;
    CLI::App* gen = app.add_subcommand("generate", "emit a synthetic dataset as CSV");
    add_data_flags(gen, gen_flags, false);
    gen->add_option("--out", gen_out, "output CSV path")->required();

    DataFlags train_flags;
    TrainFlags train_extra;
    CLI::App* train = app.add_subcommand("train", "train one realization and print losses");
    add_data_flags(train, train_flags, true);
    train->add_option("--config", train_extra.config, "experiment config to start from");
    train->add_option("--gan-epochs", train_extra.gan_epochs, "generative stage epochs");
    train->add_option("--dr-epochs", train_extra.dr_epochs, "effect-head epochs");
    train->add_option("--gamma", train_extra.gamma, "supervised term weight");
    train->add_option("--lambda", train_extra.lambda, "information term weight");
    train->add_option("--alpha", train_extra.alpha, "propensity term weight");
    train->add_option("--beta", train_extra.beta, "doubly-robust term weight");

    std::string exp_config;
    std::optional<int> exp_realizations, exp_jobs;
    std::optional<uint64_t> exp_seed;
    std::optional<std::string> exp_out;
    bool exp_compare = false;
    CLI::App* exp = app.add_subcommand("experiment", "run a multi-realization experiment");
    exp->add_option("--config", exp_config, "experiment config file")->required();
    exp->add_option("--realizations", exp_realizations, "override realization count");
    exp->add_option("--jobs", exp_jobs, "override worker count");
    exp->add_option("--seed", exp_seed, "override base seed");
    exp->add_option("--out", exp_out, "override output directory");
    exp->add_flag("--compare-without-dr", exp_compare,
                  "also run with the doubly-robust term disabled and compare factual error");

    std::string met_pred;
    DataFlags met_truth;
    CLI::App* met = app.add_subcommand("metrics", "score a predictions file against a dataset");
    met->add_option("--pred", met_pred, "CSV with yhat0,yhat1 columns")->required();
    met->add_option("--truth", met_truth.csv, "dataset CSV with ground truth")->required();
    met->add_option("--schema", met_truth.schema, "schema file for --truth");
    met->add_option("--outcome", met_truth.outcome, "outcome kind when no schema is given")
        ->capture_default_str();

    DataFlags dump_flags;
    int dump_gan_epochs = 30;
    std::string dump_out;
    CLI::App* dump = app.add_subcommand("dump-latents", "write posterior latent means as CSV");
    add_data_flags(dump, dump_flags, true);
    dump->add_option("--gan-epochs", dump_gan_epochs, "co-training epochs before the dump")
        ->capture_default_str();
    dump->add_option("--out", dump_out, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*gen) return cmd_generate(gen_flags, gen_out);
        if (*train) return cmd_train(config_for_train(train_extra, train_flags));
        if (*exp) {
            ExperimentConfig cfg = load_experiment_config(exp_config);
            if (exp_realizations) cfg.realizations = *exp_realizations;
            if (exp_jobs) cfg.jobs = *exp_jobs;
            if (exp_seed) cfg.base_seed = *exp_seed;
            if (exp_out) cfg.output_dir = *exp_out;
            return cmd_experiment(cfg, exp_compare);
        }
        if (*met) return cmd_metrics(met_pred, met_truth);
        if (*dump) return cmd_dump_latents(dump_flags, dump_gan_epochs, dump_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
