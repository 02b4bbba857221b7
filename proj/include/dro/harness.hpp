#pragma once

#include "dro/optimizers.hpp"
#include "dro/validation.hpp"

#include <iosfwd>
#include <map>
#include <string>

namespace dro {

struct SyntheticSpec {
    long n_major = 900;
    long n_minor = 100;
    int dim = 20;
    double separation = 2.0;
    double noise = 0.0;  // label flip probability
    std::uint64_t seed = 1;
};

/// Two Gaussian blobs at +-separation along the first axis: majority class
/// -1 first, minority class +1 after it. Deterministic per seed.
Dataset gen_imbalanced(const SyntheticSpec& spec);

enum class DataFormat { LibsvmSparse, DenseCsv };

/// Loads a dataset; libsvm rows are densified. Parse failures carry the line
/// number.
Dataset load_dataset(const std::string& path, DataFormat format);

/// Dense CSV with the label in column 0; feature values are written with
/// full round-trip precision.
void save_csv(const Dataset& data, const std::string& path);

struct ExperimentConfig {
    // problem
    std::string data_path;           // empty: use the synthetic spec
    DataFormat data_format = DataFormat::DenseCsv;
    SyntheticSpec synth;
    std::string loss = "logistic";   // logistic | mlp
    int mlp_hidden = 8;
    int mlp_classes = 2;
    double rho = 0.5;
    double lambda0 = 1e-3;
    double radius = 1.0;
    double overflow_guard = 300.0;

    // algorithm
    std::string algo = "scdro";  // scdro|ascdro|rscdro|rascdro|sgd|minibatch|primal-dual
    std::string schedule = "constant";  // constant|theorem2|theory|practical
    double eta = 0.01;
    double beta = 0.1;
    double mu = 0.0;
    long iters = 10000;
    int stages = 0;
    int batch = 0;  // 0: mode default (1, or the analysis batch for theory restarts)
    double sigma_sq = 0.0;  // 0: estimate when a schedule needs it
    double eta_p = 0.1;     // dual step for primal-dual
    double target_gap = 1e-3;

    // execution
    std::uint64_t seed = 1;
    long eval_every = 1000;
    std::string out_path = "metrics.csv";
};

/// Parses "key = value" lines ('#' comments, blank lines ignored). Unknown
/// keys are a ConfigError.
ExperimentConfig parse_config_file(const std::string& path);
void apply_config_entry(ExperimentConfig& config, const std::string& key,
                        const std::string& value);

/// Builds the problem described by the config (loads or generates data).
DroProblem build_problem(const ExperimentConfig& config);

/// Default start: w = 0, temperature at the midpoint of its interval.
Point default_start(const DroProblem& problem);

/// Runs the configured algorithm and writes the metrics CSV.
RunResult run_experiment(const ExperimentConfig& config);

extern const char* const kMetricsHeader;
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);

struct SweepOutcome {
    std::string value;
    std::string metrics_path;
    MetricsRow final_row;
};

/**
 * Runs one experiment per axis value (axis is any config key), writing
 * <out>.<axis>.<value>.csv plus a summary CSV of the final rows; for a seed
 * axis the summary ends with median and IQR rows. Jobs run in parallel up to
 * the given limit.
 */
std::vector<SweepOutcome> sweep(const ExperimentConfig& base, const std::string& axis,
                                const std::vector<std::string>& values, int jobs,
                                const std::string& summary_path);

}  // namespace dro
