#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfdr/cfgan.hpp"
#include "cfdr/dataset.hpp"
#include "cfdr/drhead.hpp"
#include "cfdr/metrics.hpp"
#include "cfdr/vae.hpp"

namespace cfdr {

enum class DataSource { ConfoundedBinary, FactoredContinuous, Csv };

// A full experiment is a pure function of this struct: every random draw is
// derived from base_seed + realization index, so two runs of the same config
// produce bit-identical result files.
struct ExperimentConfig {
    std::string name = "experiment";

    DataSource source = DataSource::ConfoundedBinary;
    int n = 1000;             // synthetic sample size
    std::string csv_path;     // "{r}" expands to the realization index
    std::string schema_path;  // empty = standard column layout
    OutcomeKind csv_outcome = OutcomeKind::Continuous;  // only read when schema_path is empty

    SplitSpec split;  // fractions only; the seed is set per realization
    VaeConfig vae;
    GanConfig gan;
    DrConfig dr;

    int realizations = 10;
    uint64_t base_seed = 1;
    bool without_dr_loss = false;    // beta = 0 in the effect head
    bool without_info_loss = false;  // lambda = 0 in the generator
    int jobs = 1;
    std::string output_dir = "results";
};

ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);  // canonical, round-trippable
ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const ExperimentConfig& cfg, const std::string& path);

// 64-bit FNV-1a over the canonical JSON form, as 16 hex digits.
std::string config_fingerprint(const ExperimentConfig& cfg);

struct RealizationRecord {
    int realization = 0;
    uint64_t seed = 0;
    bool failed = false;
    std::string error;      // nonempty iff failed
    MetricSet in_sample;    // training split
    MetricSet out_sample;   // test split
};

struct AggregateRow {
    std::string metric;
    double mean = 0.0;
    double stddev = 0.0;  // population form; 0 when count == 1
    int count = 0;
};

struct RunResult {
    ExperimentConfig cfg;
    std::string fingerprint;
    std::vector<RealizationRecord> records;
    std::vector<AggregateRow> aggregate;
    int failed_count = 0;
    double wall_seconds = 0.0;  // reported separately, never in the deterministic files
};

// One end-to-end realization: data, split, latent model + adversarial pair,
// dataset completion, effect head, metrics on train and test.
RealizationRecord run_realization(const ExperimentConfig& cfg, int realization);

// Runs all realizations (in parallel when jobs > 1; results are identical to
// the serial order). A failed realization is recorded and skipped in the
// aggregates; more than half failing aborts the run.
RunResult run_experiment(const ExperimentConfig& cfg);

std::vector<AggregateRow> aggregate_records(const std::vector<RealizationRecord>& records);

struct CompareCounts {
    int first_wins = 0;
    int second_wins = 0;
    int ties = 0;
    int skipped = 0;  // pairs with a failure on either side
};

// Per-realization comparison of out-of-sample factual error between two runs
// with identical seeds, e.g. the full configuration against an ablation.
CompareCounts compare_dr_vs_nondr(const RunResult& first, const RunResult& second);

// Writes results.csv (one row per realization), summary.json (aggregates and
// failures), config.json (exact config) and timing.txt into dir. Everything
// except timing.txt is a pure function of the config.
void write_report(const RunResult& res, const std::string& dir);

}  // namespace cfdr
