#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cfdr/csv.hpp"
#include "cfdr/datagen.hpp"
#include "cfdr/experiment.hpp"

using namespace cfdr;

namespace {

namespace fs = std::filesystem;

// Small-but-real network sizes so a full realization runs in well under a
// second on synthetic data.
ExperimentConfig tiny_experiment() {
    ExperimentConfig cfg;
    cfg.name = "tiny";
    cfg.source = DataSource::FactoredContinuous;
    cfg.n = 40;
    cfg.realizations = 2;
    cfg.base_seed = 7;

    cfg.vae.trunk_width = 6;
    cfg.vae.trunk_layers = 1;
    cfg.vae.latent_dims = {2, 1, 1, 1};
    cfg.vae.decoder_width = 6;
    cfg.vae.decoder_layers = 1;

    cfg.gan.z_g_dim = 2;
    cfg.gan.gen_width = 6;
    cfg.gan.dsc_width = 6;
    cfg.gan.dsc_layers = 1;
    cfg.gan.q_width = 6;
    cfg.gan.q_layers = 1;
    cfg.gan.epochs = 2;
    cfg.gan.batch_size = 16;

    cfg.dr.trunk_dims = {8, 4};
    cfg.dr.head_dims = {4, 1};
    cfg.dr.propensity_dims = {4};
    cfg.dr.regressor_dims = {4};
    cfg.dr.epochs = 2;
    cfg.dr.batch_size = 16;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& leaf) {
    const fs::path dir = fs::temp_directory_path() / "cfdr_exp_tests" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const error& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("config json round trip is canonical") {
    ExperimentConfig cfg = tiny_experiment();
    cfg.csv_path = "data_{r}.csv";
    cfg.schema_path = "layout.schema";
    cfg.csv_outcome = OutcomeKind::Binary;
    cfg.split.train = 0.6;
    cfg.split.validation = 0.2;
    cfg.split.test = 0.2;
    cfg.gan.gamma = 0.5;
    cfg.gan.lambda = 0.05;
    cfg.dr.alpha = 0.9;
    cfg.dr.beta = 0.3;
    cfg.without_dr_loss = true;
    cfg.without_info_loss = true;
    cfg.jobs = 3;
    cfg.output_dir = "out";

    const std::string text = config_to_json(cfg);
    const ExperimentConfig back = config_from_json(text);
    CHECK(config_to_json(back) == text);
    CHECK(back.name == "tiny");
    CHECK(back.source == DataSource::FactoredContinuous);
    CHECK(back.csv_outcome == OutcomeKind::Binary);
    CHECK(back.vae.latent_dims == std::array<int, 4>{2, 1, 1, 1});
    CHECK(back.gan.lambda == 0.05);
    CHECK(back.dr.trunk_dims == std::vector<int>{8, 4});
    CHECK(back.without_dr_loss);
    CHECK(back.jobs == 3);

    // Defaults survive an empty object.
    const ExperimentConfig d = config_from_json("{}");
    CHECK(d.source == DataSource::ConfoundedBinary);
    CHECK(d.realizations == 10);
    CHECK(d.gan.epochs == 300);
    CHECK(d.dr.epochs == 200);
}

TEST_CASE("config parsing rejects unknown keys at every level") {
    CHECK(message_of([] { (void)config_from_json("{\"frobnicate\": 1}"); })
              .find("unknown key 'frobnicate'") != std::string::npos);
    CHECK(message_of([] { (void)config_from_json("{\"dataset\": {\"rows\": 5}}"); })
              .find("unknown key 'rows'") != std::string::npos);
    CHECK(message_of([] { (void)config_from_json("{\"split\": {\"holdout\": 0.1}}"); })
              .find("unknown key 'holdout'") != std::string::npos);
    CHECK(message_of([] { (void)config_from_json("{\"vae\": {\"width\": 3}}"); })
              .find("unknown key 'width'") != std::string::npos);
    CHECK(message_of([] { (void)config_from_json("{\"gan\": {\"momentum\": 0.9}}"); })
              .find("unknown key 'momentum'") != std::string::npos);
    CHECK(message_of([] { (void)config_from_json("{\"dr\": {\"dropout\": 0.5}}"); })
              .find("unknown key 'dropout'") != std::string::npos);

    CHECK_THROWS_AS((void)config_from_json("not json"), error);
    CHECK_THROWS_AS((void)config_from_json("{\"dataset\": {\"source\": \"mystery\"}}"), error);
    CHECK_THROWS_AS((void)config_from_json("{\"dataset\": {\"outcome\": \"ordinal\"}}"), error);
    CHECK_THROWS_AS((void)config_from_json("{\"realizations\": 0}"), error);
    CHECK_THROWS_AS((void)config_from_json("{\"jobs\": 0}"), error);
    CHECK_THROWS_AS((void)config_from_json("{\"dataset\": {\"source\": \"csv\"}}"), error);
    CHECK_THROWS_AS((void)config_from_json("{\"dataset\": {\"n\": 5}}"), error);
}

TEST_CASE("config files round trip through disk") {
    const fs::path dir = fresh_dir("config_io");
    const fs::path path = dir / "exp.json";
    ExperimentConfig cfg = tiny_experiment();
    save_experiment_config(cfg, path.string());
    const ExperimentConfig back = load_experiment_config(path.string());
    CHECK(config_to_json(back) == config_to_json(cfg));
    CHECK_THROWS_AS((void)load_experiment_config((dir / "absent.json").string()), error);
}

TEST_CASE("fingerprints are stable and sensitive") {
    const ExperimentConfig a = tiny_experiment();
    const std::string fp = config_fingerprint(a);
    CHECK(fp.size() == 16);
    CHECK(fp.find_first_not_of("0123456789abcdef") == std::string::npos);
    CHECK(config_fingerprint(tiny_experiment()) == fp);

    ExperimentConfig b = tiny_experiment();
    b.n = 41;
    CHECK(config_fingerprint(b) != fp);
    ExperimentConfig c = tiny_experiment();
    c.dr.beta = 0.5;
    CHECK(config_fingerprint(c) != fp);
    ExperimentConfig d = tiny_experiment();
    d.name = "other";
    CHECK(config_fingerprint(d) != fp);
}

TEST_CASE("aggregates use population spread and skip failures and absences") {
    RealizationRecord r0;
    r0.realization = 0;
    r0.seed = 1;
    r0.in_sample.factual_rmse = 1.0;
    r0.out_sample.factual_rmse = 2.0;
    r0.out_sample.pehe_rmse = 3.0;

    RealizationRecord r1 = r0;
    r1.realization = 1;
    r1.seed = 2;
    r1.out_sample.factual_rmse = 4.0;
    r1.out_sample.pehe_rmse.reset();  // metric unavailable for this realization

    RealizationRecord bad;
    bad.realization = 2;
    bad.seed = 3;
    bad.failed = true;
    bad.out_sample.factual_rmse = 99.0;  // must be ignored

    const auto rows = aggregate_records({r0, r1, bad});
    auto find = [&](const std::string& name) -> const AggregateRow* {
        for (const auto& row : rows)
            if (row.metric == name) return &row;
        return nullptr;
    };

    const AggregateRow* out_f = find("out_factual_rmse");
    REQUIRE(out_f != nullptr);
    CHECK(out_f->count == 2);
    CHECK(out_f->mean == 3.0);
    CHECK(out_f->stddev == 1.0);  // population form over {2, 4}

    const AggregateRow* out_p = find("out_pehe_rmse");
    REQUIRE(out_p != nullptr);
    CHECK(out_p->count == 1);
    CHECK(out_p->mean == 3.0);
    CHECK(out_p->stddev == 0.0);  // single value

    CHECK(find("out_eps_ate") == nullptr);  // never present in any record
    CHECK(find("in_factual_rmse") != nullptr);
}

TEST_CASE("paired comparison counts wins, ties, and skipped failures") {
    auto rec = [](uint64_t seed, bool failed, double out_f) {
        RealizationRecord r;
        r.seed = seed;
        r.failed = failed;
        r.out_sample.factual_rmse = out_f;
        return r;
    };
    RunResult full, ablated;
    full.records = {rec(1, false, 1.0), rec(2, false, 5.0), rec(3, false, 2.0),
                    rec(4, true, 0.0)};
    ablated.records = {rec(1, false, 2.0), rec(2, false, 4.0), rec(3, false, 2.0),
                       rec(4, false, 1.0)};

    const CompareCounts c = compare_dr_vs_nondr(full, ablated);
    CHECK(c.first_wins == 1);
    CHECK(c.second_wins == 1);
    CHECK(c.ties == 1);
    CHECK(c.skipped == 1);

    RunResult short_run;
    short_run.records = {rec(1, false, 1.0)};
    CHECK_THROWS_AS((void)compare_dr_vs_nondr(full, short_run), error);

    RunResult misseeded = ablated;
    misseeded.records[0].seed = 99;
    CHECK_THROWS_AS((void)compare_dr_vs_nondr(full, misseeded), error);
}

TEST_CASE("a tiny synthetic experiment runs end to end") {
    const ExperimentConfig cfg = tiny_experiment();
    const RunResult res = run_experiment(cfg);
    CHECK(res.failed_count == 0);
    REQUIRE(res.records.size() == 2);
    CHECK(res.fingerprint == config_fingerprint(cfg));
    for (const auto& rec : res.records) {
        CHECK_FALSE(rec.failed);
        CHECK(rec.out_sample.factual_rmse > 0.0);
        CHECK(rec.out_sample.pehe_rmse.has_value());  // synthetic data carries true means
        CHECK(rec.out_sample.ate_dr.has_value());
    }
    CHECK(res.records[0].seed == 7);
    CHECK(res.records[1].seed == 8);
    CHECK(res.wall_seconds > 0.0);
    CHECK_FALSE(res.aggregate.empty());

    // Parallel execution reproduces the serial records exactly.
    ExperimentConfig par = cfg;
    par.jobs = 2;
    const RunResult res2 = run_experiment(par);
    REQUIRE(res2.records.size() == res.records.size());
    for (std::size_t i = 0; i < res.records.size(); ++i) {
        CHECK(res2.records[i].out_sample.factual_rmse == res.records[i].out_sample.factual_rmse);
        CHECK(*res2.records[i].out_sample.pehe_rmse == *res.records[i].out_sample.pehe_rmse);
        CHECK(*res2.records[i].in_sample.ate_model == *res.records[i].in_sample.ate_model);
    }
}

TEST_CASE("reports are bit-identical across repeated runs") {
    const ExperimentConfig cfg = tiny_experiment();
    const fs::path dir1 = fresh_dir("report_a");
    const fs::path dir2 = fresh_dir("report_b");
    write_report(run_experiment(cfg), dir1.string());
    write_report(run_experiment(cfg), dir2.string());

    for (const char* name : {"results.csv", "summary.json", "config.json"})
        CHECK(slurp(dir1 / name) == slurp(dir2 / name));
    CHECK(fs::exists(dir1 / "timing.txt"));

    const std::string csv = slurp(dir1 / "results.csv");
    const std::string header = csv.substr(0, csv.find('\n'));
    CHECK(header ==
          "realization,seed,failed"
          ",in_pehe_rmse,in_eps_ate,in_ate_abs_err,in_ate_true,in_ate_model,in_ate_dr"
          ",in_r_pol,in_att,in_eps_att,in_factual_rmse"
          ",out_pehe_rmse,out_eps_ate,out_ate_abs_err,out_ate_true,out_ate_model,out_ate_dr"
          ",out_r_pol,out_att,out_eps_att,out_factual_rmse");
    // One data line per realization plus the header, each newline-terminated.
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("csv-sourced experiments tolerate isolated missing realizations") {
    const fs::path dir = fresh_dir("csv_source");
    for (int r : {0, 2}) {
        const Dataset ds = gen_factored_continuous(30, 100 + static_cast<uint64_t>(r));
        write_csv(ds, (dir / ("data" + std::to_string(r) + ".csv")).string());
    }

    ExperimentConfig cfg = tiny_experiment();
    cfg.source = DataSource::Csv;
    cfg.csv_path = (dir / "data{r}.csv").string();
    cfg.realizations = 3;

    const RunResult res = run_experiment(cfg);
    CHECK(res.failed_count == 1);
    CHECK(res.records[1].failed);
    CHECK(res.records[1].error.find("data1.csv") != std::string::npos);
    CHECK_FALSE(res.records[0].failed);
    CHECK_FALSE(res.records[2].failed);

    // The failed slot leaves empty metric cells but keeps its row.
    const fs::path rep = fresh_dir("csv_report");
    write_report(res, rep.string());
    const std::string csv = slurp(rep / "results.csv");
    CHECK(csv.find("\n1," + std::to_string(cfg.base_seed + 1) + ",1,,") != std::string::npos);

    // With a majority of realizations missing the run aborts.
    ExperimentConfig worse = cfg;
    worse.realizations = 3;
    worse.csv_path = (dir / "nothing_{r}.csv").string();
    const std::string msg = message_of([&] { (void)run_experiment(worse); });
    CHECK(msg.find("realizations failed") != std::string::npos);
}
