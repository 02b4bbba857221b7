#include "dro/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace dro {

Dataset gen_imbalanced(const SyntheticSpec& spec) {
    if (spec.n_major < 1 || spec.n_minor < 1)
        throw ConfigError("class counts must be at least 1");
    if (spec.dim < 2) throw ConfigError("synthetic data needs dim >= 2");
    if (spec.noise < 0 || spec.noise >= 1) throw ConfigError("noise must lie in [0, 1)");

    Rng rng(spec.seed);
    const long n = spec.n_major + spec.n_minor;
    Dataset data;
    data.features.resize(n, spec.dim);
    data.labels.resize(n);
    for (long i = 0; i < n; ++i) {
        const bool minority = i >= spec.n_major;
        const double center = minority ? spec.separation : -spec.separation;
        for (int j = 0; j < spec.dim; ++j)
            data.features(i, j) = (j == 0 ? center : 0.0) + rng.normal();
        int label = minority ? 1 : -1;
        if (spec.noise > 0 && rng.uniform01() < spec.noise) label = -label;
        data.labels[i] = label;
    }
    return data;
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, long line, const std::string& what) {
    throw DataError(path + ":" + std::to_string(line) + ": " + what);
}

int parse_label(const std::string& tok, const std::string& path, long line) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size()) parse_fail(path, line, "bad label '" + tok + "'");
        return v;
    } catch (const std::exception&) {
        parse_fail(path, line, "bad label '" + tok + "'");
    }
}

void validate_labels(const Dataset& data, const std::string& path) {
    bool binary = true, indexed = true;
    for (int y : data.labels) {
        if (y != -1 && y != 1) binary = false;
        if (y < 0) indexed = false;
    }
    if (!binary && !indexed)
        throw DataError(path + ": labels must be -1/+1 or class indices 0..K-1");
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string line;
    long lineno = 0;
    int d = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        if (!std::getline(ss, tok, ',')) parse_fail(path, lineno, "missing label");
        labels.push_back(parse_label(tok, path, lineno));
        std::vector<double> feats;
        while (std::getline(ss, tok, ',')) {
            try {
                std::size_t used = 0;
                feats.push_back(std::stod(tok, &used));
                if (used != tok.size()) parse_fail(path, lineno, "bad value '" + tok + "'");
            } catch (const DataError&) {
                throw;
            } catch (const std::exception&) {
                parse_fail(path, lineno, "bad value '" + tok + "'");
            }
        }
        if (d < 0) d = static_cast<int>(feats.size());
        if (static_cast<int>(feats.size()) != d)
            parse_fail(path, lineno, "expected " + std::to_string(d) + " features");
        rows.push_back(std::move(feats));
    }
    if (rows.empty()) throw DataError(path + ": empty dataset");

    Dataset data;
    data.features.resize(static_cast<long>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < d; ++j) data.features(static_cast<long>(i), j) = rows[i][j];
    data.labels = std::move(labels);
    validate_labels(data, path);
    data.validate();
    return data;
}

Dataset load_libsvm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<std::vector<std::pair<int, double>>> rows;
    std::vector<int> labels;
    std::string line;
    long lineno = 0;
    int max_index = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok.empty()) continue;
        labels.push_back(parse_label(tok, path, lineno));
        std::vector<std::pair<int, double>> entries;
        while (ss >> tok) {
            const auto colon = tok.find(':');
            if (colon == std::string::npos)
                parse_fail(path, lineno, "expected index:value, got '" + tok + "'");
            try {
                const int idx = std::stoi(tok.substr(0, colon));
                const double val = std::stod(tok.substr(colon + 1));
                if (idx < 1) parse_fail(path, lineno, "indices are 1-based");
                entries.emplace_back(idx, val);
                max_index = std::max(max_index, idx);
            } catch (const DataError&) {
                throw;
            } catch (const std::exception&) {
                parse_fail(path, lineno, "bad entry '" + tok + "'");
            }
        }
        rows.push_back(std::move(entries));
    }
    if (rows.empty()) throw DataError(path + ": empty dataset");

    Dataset data;
    data.features = RowMat::Zero(static_cast<long>(rows.size()), max_index);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (const auto& [idx, val] : rows[i])
            data.features(static_cast<long>(i), idx - 1) = val;
    data.labels = std::move(labels);
    validate_labels(data, path);
    data.validate();
    return data;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

Dataset load_dataset(const std::string& path, DataFormat format) {
    return format == DataFormat::DenseCsv ? load_csv(path) : load_libsvm(path);
}

void save_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    for (int i = 0; i < data.n(); ++i) {
        out << data.labels[i];
        for (int j = 0; j < data.d(); ++j) out << ',' << fmt(data.features(i, j));
        out << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

void apply_config_entry(ExperimentConfig& c, const std::string& key, const std::string& value) {
    auto as_double = [&] {
        try {
            return std::stod(value);
        } catch (const std::exception&) {
            throw ConfigError("bad numeric value for " + key + ": '" + value + "'");
        }
    };
    auto as_long = [&] {
        try {
            return std::stol(value);
        } catch (const std::exception&) {
            throw ConfigError("bad integer value for " + key + ": '" + value + "'");
        }
    };

    if (key == "data") c.data_path = value;
    else if (key == "format") {
        if (value == "csv") c.data_format = DataFormat::DenseCsv;
        else if (value == "libsvm") c.data_format = DataFormat::LibsvmSparse;
        else throw ConfigError("unknown data format '" + value + "'");
    }
    else if (key == "loss") {
        if (value != "logistic" && value != "mlp")
            throw ConfigError("unknown loss '" + value + "'");
        c.loss = value;
    }
    else if (key == "hidden") c.mlp_hidden = static_cast<int>(as_long());
    else if (key == "classes") c.mlp_classes = static_cast<int>(as_long());
    else if (key == "rho") c.rho = as_double();
    else if (key == "lambda0") c.lambda0 = as_double();
    else if (key == "radius") c.radius = as_double();
    else if (key == "guard") c.overflow_guard = as_double();
    else if (key == "algo") c.algo = value;
    else if (key == "schedule") c.schedule = value;
    else if (key == "eta") c.eta = as_double();
    else if (key == "beta") c.beta = as_double();
    else if (key == "mu") c.mu = as_double();
    else if (key == "iters") c.iters = as_long();
    else if (key == "stages") c.stages = static_cast<int>(as_long());
    else if (key == "batch") c.batch = static_cast<int>(as_long());
    else if (key == "sigma_sq") c.sigma_sq = as_double();
    else if (key == "eta_p") c.eta_p = as_double();
    else if (key == "target_gap") c.target_gap = as_double();
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(as_long());
    else if (key == "eval_every") c.eval_every = as_long();
    else if (key == "out") c.out_path = value;
    else if (key == "n_major") c.synth.n_major = as_long();
    else if (key == "n_minor") c.synth.n_minor = as_long();
    else if (key == "dim") c.synth.dim = static_cast<int>(as_long());
    else if (key == "separation") c.synth.separation = as_double();
    else if (key == "noise") c.synth.noise = as_double();
    else if (key == "data_seed") c.synth.seed = static_cast<std::uint64_t>(as_long());
    else throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    ExperimentConfig c;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw ConfigError(path + ":" + std::to_string(lineno) +
                                  ": expected 'key = value'");
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
        apply_config_entry(c, key, value);
    }
    return c;
}

DroProblem build_problem(const ExperimentConfig& c) {
    Dataset data = c.data_path.empty() ? gen_imbalanced(c.synth)
                                       : load_dataset(c.data_path, c.data_format);
    LossModel model;
    if (c.loss == "logistic") {
        model.kind = LossKind::BinaryLogistic;
        if (!data.labels_are_binary())
            throw ConfigError("logistic loss requires -1/+1 labels");
    } else {
        model.kind = LossKind::TanhMlp;
        model.mlp.hidden = c.mlp_hidden;
        model.mlp.classes = c.mlp_classes;
    }
    return make_problem(std::move(data), model, c.rho, c.lambda0, c.radius, c.overflow_guard);
}

Point default_start(const DroProblem& problem) {
    Point x;
    x.w = Vec::Zero(problem.model_dim());
    x.lambda = 0.5 * (problem.domain.lambda_min + problem.domain.lambda_max);
    return x;
}

const char* const kMetricsHeader =
    "iter,oracle_calls,F,F_mu,dist_sq,step_residual,train_acc,stage,wall_ms";

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write metrics to " + path);
    out << kMetricsHeader << '\n';
    for (const auto& r : rows) {
        out << r.iter << ',' << r.oracle_calls << ',' << fmt(r.objective) << ','
            << fmt(r.objective_mu) << ',' << fmt(r.dist_sq) << ',' << fmt(r.step_residual)
            << ',' << fmt(r.train_acc) << ',' << r.stage << ',' << fmt(r.wall_ms) << '\n';
    }
    if (!out) throw ConfigError("write failed: " + path);
}

RunResult run_experiment(const ExperimentConfig& c) {
    const DroProblem problem = build_problem(c);
    const Point x1 = default_start(problem);
    Rng rng(c.seed);
    EvalOptions eval;
    eval.eval_every = c.eval_every;

    const long batch = c.batch > 0 ? c.batch : 1;
    RunResult result;
    if (c.algo == "scdro" || c.algo == "ascdro") {
        Schedule sch;
        if (c.schedule == "constant") {
            sch = constant_schedule(c.beta, c.eta, c.iters);
        } else if (c.schedule == "theorem2") {
            if (c.algo != "ascdro")
                throw ConfigError("the decaying schedule applies to ascdro only");
            double sigma_sq = c.sigma_sq;
            if (sigma_sq <= 0) {
                Rng sig = rng.child("sigma-sq");
                sigma_sq = estimate_sigma_sq(problem, x1, 256, sig);
            }
            const double L = smoothness_constants(problem).objective_smooth;
            sch = decay_schedule(sigma_sq, L, 2.0, c.iters);
        } else {
            throw ConfigError("schedule '" + c.schedule + "' not valid for " + c.algo);
        }
        sch.init_batch = batch;
        result = c.algo == "scdro" ? scdro_run(problem, x1, sch, rng, eval, c.mu)
                                   : ascdro_run(problem, x1, sch, rng, eval, c.mu);
    } else if (c.algo == "rscdro" || c.algo == "rascdro") {
        StagewiseOptions opts;
        if (c.schedule == "theory") opts.theory = true;
        else if (c.schedule != "practical" && c.schedule != "constant")
            throw ConfigError("restarted runs take schedule theory or practical");
        opts.mu = c.mu;
        opts.target_gap = c.target_gap;
        opts.stages = c.stages;
        opts.sigma_sq = c.sigma_sq;
        opts.init_batch = c.batch;  // 0 keeps the mode default
        opts.beta1 = c.beta;
        opts.eta1 = c.eta;
        opts.iters1 = c.iters;
        result = restart_run(problem, x1,
                             c.algo == "rscdro" ? InnerAlgo::Scdro : InnerAlgo::Ascdro, opts,
                             rng, eval);
    } else if (c.algo == "sgd") {
        result = projected_sgd_run(problem, x1, c.eta, c.iters, rng, eval);
    } else if (c.algo == "minibatch") {
        result = plugin_minibatch_run(problem, x1, static_cast<int>(batch), c.eta, c.iters,
                                      rng, eval);
    } else if (c.algo == "primal-dual") {
        result = primal_dual_run(problem, x1, c.eta, c.eta_p, c.iters, rng, eval);
    } else {
        throw ConfigError("unknown algorithm '" + c.algo + "'");
    }

    write_metrics_csv(result.metrics, c.out_path);
    return result;
}

namespace {

std::string sanitize(std::string s) {
    for (char& ch : s)
        if (ch == '/' || ch == ' ' || ch == '\t') ch = '_';
    return s;
}

double column_median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double column_quartile_range(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto at = [&](double q) {
        const double pos = q * (v.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const double frac = pos - lo;
        return lo + 1 < v.size() ? v[lo] * (1 - frac) + v[lo + 1] * frac : v[lo];
    };
    return at(0.75) - at(0.25);
}

}  // namespace

std::vector<SweepOutcome> sweep(const ExperimentConfig& base, const std::string& axis,
                                const std::vector<std::string>& values, int jobs,
                                const std::string& summary_path) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    if (jobs < 1) jobs = 1;

    std::vector<SweepOutcome> outcomes(values.size());
    std::vector<std::exception_ptr> errors(values.size());

    auto run_one = [&](std::size_t i) {
        try {
            ExperimentConfig c = base;
            apply_config_entry(c, axis, values[i]);
            c.out_path = base.out_path + "." + sanitize(axis) + "." + sanitize(values[i]) +
                         ".csv";
            const RunResult r = run_experiment(c);
            outcomes[i] = SweepOutcome{values[i], c.out_path, r.metrics.back()};
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };

    for (std::size_t begin = 0; begin < values.size(); begin += jobs) {
        std::vector<std::thread> pool;
        const std::size_t end = std::min(values.size(), begin + jobs);
        for (std::size_t i = begin; i < end; ++i) pool.emplace_back(run_one, i);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::ofstream out(summary_path);
    if (!out) throw ConfigError("cannot write sweep summary to " + summary_path);
    out << axis << ',' << kMetricsHeader << '\n';
    auto emit = [&](const std::string& tag, const MetricsRow& r) {
        out << tag << ',' << r.iter << ',' << r.oracle_calls << ',' << fmt(r.objective)
            << ',' << fmt(r.objective_mu) << ',' << fmt(r.dist_sq) << ','
            << fmt(r.step_residual) << ',' << fmt(r.train_acc) << ',' << r.stage << ','
            << fmt(r.wall_ms) << '\n';
    };
    for (const auto& o : outcomes) emit(o.value, o.final_row);

    if (axis == "seed" && outcomes.size() >= 2) {
        auto collect = [&](auto field) {
            std::vector<double> v;
            for (const auto& o : outcomes) v.push_back(field(o.final_row));
            return v;
        };
        auto aggregate = [&](const std::string& tag, auto reducer) {
            MetricsRow r = outcomes.front().final_row;
            r.objective = reducer(collect([](const MetricsRow& m) { return m.objective; }));
            r.objective_mu =
                reducer(collect([](const MetricsRow& m) { return m.objective_mu; }));
            r.dist_sq = reducer(collect([](const MetricsRow& m) { return m.dist_sq; }));
            r.step_residual =
                reducer(collect([](const MetricsRow& m) { return m.step_residual; }));
            r.train_acc = reducer(collect([](const MetricsRow& m) { return m.train_acc; }));
            r.wall_ms = reducer(collect([](const MetricsRow& m) { return m.wall_ms; }));
            emit(tag, r);
        };
        aggregate("median", column_median);
        aggregate("iqr", column_quartile_range);
    }
    if (!out) throw ConfigError("write failed: " + summary_path);
    return outcomes;
}

}  // namespace dro
