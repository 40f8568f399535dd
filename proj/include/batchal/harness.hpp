#pragma once

// Experiment configuration, multi-strategy multi-seed execution and the
// trace/summary CSV files.
//
// Configuration is plain text: `[section]` headers and `key = value` lines,
// `#` starts a comment. Recognised sections: experiment, al, strategies,
// space, student, teacher. See configs/ for a complete example.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "batchal/al.hpp"
#include "batchal/error.hpp"
#include "batchal/nn.hpp"
#include "batchal/oracles.hpp"
#include "batchal/random.hpp"
#include "batchal/strategies.hpp"

namespace batchal::harness {

namespace fs = std::filesystem;

/// Hidden layers and training settings of one network; sizes of the input
/// and output layers follow from the oracle.
struct NetworkOverrides {
    std::vector<std::size_t> hidden;
    nn::HiddenActivation activation = nn::HiddenActivation::ReLU;
    nn::TrainConfig train;
};

struct ExperimentConfig {
    std::string oracle = "vessel_max_stress";
    oracles::DesignSpace space = oracles::vessel_space();
    std::vector<strategies::StrategyKind> strategies;
    al::ALConfig al;
    std::size_t pool_size = 3000;
    std::size_t repetitions = 3;
    NetworkOverrides student{{64, 64}, nn::HiddenActivation::ReLU, {}};
    NetworkOverrides teacher{{32}, nn::HiddenActivation::ReLU, {}};
    fs::path out_dir = "results";
    /// 0 picks the hardware concurrency; BATCHAL_WORKERS overrides either.
    std::size_t workers = 0;
    /// Off by default so trace.csv is byte-reproducible.
    bool record_wall_time = false;

    al::NetworkSetup networks() const {
        const std::size_t d = space.size();
        auto build = [d](const NetworkOverrides& o, nn::OutputActivation out) {
            nn::MlpConfig c;
            c.layer_sizes.push_back(d);
            c.layer_sizes.insert(c.layer_sizes.end(), o.hidden.begin(), o.hidden.end());
            c.layer_sizes.push_back(1);
            c.hidden = o.activation;
            c.output = out;
            return c;
        };
        return {build(student, nn::OutputActivation::Identity), build(teacher, nn::OutputActivation::Sigmoid),
                student.train, teacher.train};
    }

    void validate() const {
        space.validate();
        if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
        if (strategies.empty()) throw ConfigError("no strategies configured");
        for (const auto& s : strategies) strategies::validate(s);
        if (pool_size < al.budget() + 1)
            throw ConfigError("budget invariant violated: pool_size (" + std::to_string(pool_size) +
                              ") must be >= warmup_M + T*b + 1 = " + std::to_string(al.budget() + 1));
        al.validate(pool_size);
        networks().validate(space.size());
        oracles::make_oracle(oracle, &space);
    }
};

inline std::vector<strategies::StrategyKind> default_strategies() {
    return {strategies::RandomBatch{}, strategies::EpsHqs{strategies::LogGreedyEps{}, 0.5}};
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return s;
}

struct Context {
    std::string where;  // "config:12" for messages

    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where + ": " + msg); }

    double real(const std::string& v) const {
        char* end = nullptr;
        errno = 0;
        const double x = std::strtod(v.c_str(), &end);
        if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(x))
            fail("expected a number, got '" + v + "'");
        return x;
    }

    std::uint64_t count(const std::string& v) const {
        if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
            fail("expected a non-negative integer, got '" + v + "'");
        errno = 0;
        const auto x = std::strtoull(v.c_str(), nullptr, 10);
        if (errno == ERANGE) fail("integer out of range: '" + v + "'");
        return x;
    }

    bool flag(const std::string& v) const {
        const auto l = lower(v);
        if (l == "true" || l == "yes" || l == "1" || l == "on") return true;
        if (l == "false" || l == "no" || l == "0" || l == "off") return false;
        fail("expected a boolean, got '" + v + "'");
    }
};

/// Parses the value of a `strategy = name, key = value, ...` line.
inline strategies::StrategyKind parse_strategy(const std::string& value, const Context& ctx) {
    const auto parts = split(value, ',');
    const std::string name = lower(parts.front());
    std::map<std::string, std::string> opts;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const auto eq = parts[i].find('=');
        if (eq == std::string::npos) ctx.fail("strategy option '" + parts[i] + "' must be key = value");
        opts[lower(trim(parts[i].substr(0, eq)))] = trim(parts[i].substr(eq + 1));
    }
    auto take = [&](const std::string& key) -> std::optional<std::string> {
        auto it = opts.find(key);
        if (it == opts.end()) return std::nullopt;
        std::string v = it->second;
        opts.erase(it);
        return v;
    };

    strategies::StrategyKind kind;
    if (name == "random") {
        kind = strategies::RandomBatch{};
    } else if (name == "top_b") {
        kind = strategies::TopB{};
    } else if (name == "dbal") {
        strategies::Dbal d;
        if (auto v = take("beta")) d.beta = ctx.count(*v);
        kind = d;
    } else if (name == "eps_hqs") {
        strategies::EpsHqs e;
        if (auto v = take("eps")) {
            if (lower(*v) == "greedy")
                e.eps = strategies::LogGreedyEps{};
            else
                e.eps = strategies::ConstantEps{ctx.real(*v)};
        }
        if (auto v = take("threshold")) e.threshold = ctx.real(*v);
        kind = e;
    } else {
        ctx.fail("unknown strategy '" + parts.front() + "'");
    }
    if (!opts.empty()) ctx.fail("unknown option '" + opts.begin()->first + "' for strategy '" + name + "'");
    try {
        strategies::validate(kind);
    } catch (const ConfigError& e) {
        ctx.fail(e.what());
    }
    return kind;
}

inline void apply_network_key(NetworkOverrides& net, const std::string& key, const std::string& value,
                              const Context& ctx) {
    if (key == "hidden") {
        net.hidden.clear();
        for (const auto& s : split(value, ',')) net.hidden.push_back(ctx.count(s));
    } else if (key == "activation") {
        const auto v = lower(value);
        if (v == "relu")
            net.activation = nn::HiddenActivation::ReLU;
        else if (v == "tanh")
            net.activation = nn::HiddenActivation::Tanh;
        else
            ctx.fail("unknown activation '" + value + "'");
    } else if (key == "learning_rate" || key == "lr") {
        net.train.learning_rate = ctx.real(value);
    } else if (key == "epochs") {
        net.train.epochs = ctx.count(value);
    } else if (key == "minibatch" || key == "minibatch_size") {
        net.train.minibatch_size = ctx.count(value);
    } else if (key == "optimizer") {
        const auto v = lower(value);
        if (v == "adam")
            net.train.optimizer = nn::Adam{};
        else if (v == "sgd")
            net.train.optimizer = nn::Sgd{};
        else
            ctx.fail("unknown optimizer '" + value + "'");
    } else if (key == "beta1" || key == "beta2" || key == "adam_eps") {
        auto* adam = std::get_if<nn::Adam>(&net.train.optimizer);
        if (!adam) ctx.fail("'" + key + "' requires optimizer = adam");
        (key == "beta1" ? adam->beta1 : key == "beta2" ? adam->beta2 : adam->eps) = ctx.real(value);
    } else {
        ctx.fail("unknown key '" + key + "'");
    }
}

}  // namespace detail

/// Parses configuration text; `source` only labels error messages.
inline ExperimentConfig parse_config_text(std::string_view text, const std::string& source = "config") {
    using detail::Context;
    ExperimentConfig cfg;
    std::vector<strategies::StrategyKind> strategies;
    std::vector<std::pair<std::string, std::string>> space_lines;
    std::vector<std::string> space_ctx;
    std::string section = "experiment";

    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const Context ctx{source + ":" + std::to_string(lineno)};
        std::string line = raw;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') ctx.fail("malformed section header '" + line + "'");
            section = detail::lower(detail::trim(line.substr(1, line.size() - 2)));
            static const char* known[] = {"experiment", "al", "strategies", "space", "student", "teacher"};
            if (std::find(std::begin(known), std::end(known), section) == std::end(known))
                ctx.fail("unknown section '" + section + "'");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) ctx.fail("expected key = value, got '" + line + "'");
        const std::string key = detail::lower(detail::trim(line.substr(0, eq)));
        const std::string value = detail::trim(line.substr(eq + 1));

        if (key == "strategy" && (section == "strategies" || section == "experiment")) {
            strategies.push_back(detail::parse_strategy(value, ctx));
        } else if (section == "experiment") {
            if (key == "oracle") {
                cfg.oracle = value;
            } else if (key == "pool_size") {
                cfg.pool_size = ctx.count(value);
            } else if (key == "repetitions") {
                cfg.repetitions = ctx.count(value);
            } else if (key == "seed") {
                cfg.al.base_seed = ctx.count(value);
            } else if (key == "out_dir") {
                cfg.out_dir = value;
            } else if (key == "workers") {
                cfg.workers = ctx.count(value);
            } else if (key == "record_wall_time") {
                cfg.record_wall_time = ctx.flag(value);
            } else {
                ctx.fail("unknown key '" + key + "'");
            }
        } else if (section == "al") {
            if (key == "m" || key == "warmup_m")
                cfg.al.warmup_M = ctx.count(value);
            else if (key == "t" || key == "iterations_t")
                cfg.al.iterations_T = ctx.count(value);
            else if (key == "b" || key == "batch_b")
                cfg.al.batch_b = ctx.count(value);
            else if (key == "aa")
                cfg.al.aa = ctx.real(value);
            else if (key == "warm_start")
                cfg.al.warm_start = ctx.flag(value);
            else if (key == "inner_split")
                cfg.al.inner_split = ctx.flag(value);
            else
                ctx.fail("unknown key '" + key + "'");
        } else if (section == "space") {
            space_lines.emplace_back(key, value);
            space_ctx.push_back(ctx.where);
        } else if (section == "student" || section == "teacher") {
            detail::apply_network_key(section == "student" ? cfg.student : cfg.teacher, key, value, ctx);
        } else {
            ctx.fail("key '" + key + "' not allowed in [" + section + "]");
        }
    }

    try {
        cfg.space = oracles::default_space(cfg.oracle);
    } catch (const ConfigError&) {
        throw ConfigError(source + ": unknown oracle '" + cfg.oracle + "'");
    }
    for (std::size_t i = 0; i < space_lines.size(); ++i) {
        const Context ctx{space_ctx[i]};
        const auto& [key, value] = space_lines[i];
        std::size_t idx = 0;
        try {
            idx = cfg.space.index_of(key);
        } catch (const ConfigError&) {
            ctx.fail("oracle '" + cfg.oracle + "' has no dimension '" + key + "'");
        }
        // optional trailing unit: "20, 300 mm", "0, 50 deg"
        std::string numbers = value;
        std::string unit;
        if (const auto sp = value.find_last_of(" \t"); sp != std::string::npos &&
                                                        std::isalpha(static_cast<unsigned char>(value.back()))) {
            unit = detail::lower(detail::trim(value.substr(sp + 1)));
            numbers = detail::trim(value.substr(0, sp));
        }
        const auto bounds = detail::split(numbers, ',');
        if (bounds.size() != 2) ctx.fail("bounds for '" + key + "' must be lo, hi [unit]");
        auto& dim = cfg.space.dims[idx];
        double scale = 1.0;
        if (!unit.empty()) {
            if (dim.unit == "m" && (unit == "m" || unit == "mm"))
                scale = unit == "mm" ? 1e-3 : 1.0;
            else if (dim.unit == "rad" && (unit == "rad" || unit == "deg"))
                scale = unit == "deg" ? std::numbers::pi / 180.0 : 1.0;
            else
                ctx.fail("unit '" + unit + "' does not apply to '" + key + "'");
        }
        dim.lo = ctx.real(bounds[0]) * scale;
        dim.hi = ctx.real(bounds[1]) * scale;
    }
    cfg.strategies = strategies.empty() ? default_strategies() : std::move(strategies);
    cfg.validate();
    return cfg;
}

inline ExperimentConfig parse_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.filename().string());
}

// ---------------------------------------------------------------------------
// CSV

struct ResultRow {
    std::string strategy;
    std::size_t rep = 0;
    std::size_t iteration = 0;
    std::size_t n_labeled = 0;
    double accuracy = 0.0;
    double wall_ms = 0.0;

    friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

inline constexpr std::string_view kTraceHeader = "strategy,rep,iteration,n_labeled,accuracy,wall_ms";
inline constexpr std::string_view kSummaryHeader = "strategy,iteration,n_labeled,mean_accuracy,std_accuracy,runs";

inline std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

/// The value an accuracy takes after a write/read cycle through trace.csv.
inline double as_written(double accuracy) { return std::strtod(format_fixed(accuracy, 6).c_str(), nullptr); }

inline void write_csv(std::span<const ResultRow> rows, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << kTraceHeader << '\n';
    for (const auto& r : rows) {
        if (r.strategy.find_first_of(",\n") != std::string::npos)
            throw IoError("strategy label '" + r.strategy + "' cannot be written to CSV");
        out << r.strategy << ',' << r.rep << ',' << r.iteration << ',' << r.n_labeled << ','
            << format_fixed(r.accuracy, 6) << ',' << format_fixed(r.wall_ms, 3) << '\n';
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::vector<ResultRow> read_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line != kTraceHeader) throw IoError("'" + path.string() + "': bad header");
    std::vector<ResultRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        const auto f = detail::split(line, ',');
        const detail::Context ctx{path.filename().string() + ":" + std::to_string(lineno)};
        if (f.size() != 6) throw IoError(ctx.where + ": expected 6 fields");
        try {
            rows.push_back({f[0], ctx.count(f[1]), ctx.count(f[2]), ctx.count(f[3]), ctx.real(f[4]), ctx.real(f[5])});
        } catch (const ConfigError& e) {
            throw IoError(e.what());
        }
    }
    return rows;
}

inline void write_summary_csv(const std::vector<std::pair<std::string, std::vector<al::IterationSummary>>>& groups,
                              const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << kSummaryHeader << '\n';
    for (const auto& [label, rows] : groups)
        for (const auto& s : rows)
            out << label << ',' << s.iteration << ',' << s.n_labeled << ',' << format_fixed(s.mean_accuracy, 12)
                << ',' << format_fixed(s.std_accuracy, 12) << ',' << s.runs << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Execution

inline std::size_t resolve_workers(std::size_t configured) {
    if (const char* env = std::getenv("BATCHAL_WORKERS"); env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v < 1) throw ConfigError("BATCHAL_WORKERS must be a positive integer");
        return std::size_t(v);
    }
    if (configured > 0) return configured;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Seed of the single candidate pool shared by every run of an experiment.
inline std::uint64_t pool_seed(std::uint64_t base) { return derive_seed(base, {0x9001}); }

/// Seeds for (strategy, repetition). The shared part depends on the
/// repetition only, so strategies are compared on identical warmup sets and
/// initial weights.
inline al::RunSeeds run_seeds(std::uint64_t base, std::size_t strategy_index, std::size_t rep) {
    return {derive_seed(base, {0x5ea, rep}), derive_seed(base, {0x90c, strategy_index, rep})};
}

struct ExperimentResult {
    std::vector<ResultRow> rows;
    std::vector<std::pair<std::string, std::vector<al::IterationSummary>>> summary;
    std::vector<std::vector<al::RunTrace>> traces;  // [strategy][rep]
};

/// Runs every (strategy, repetition) pair and collects rows in a canonical
/// order; nothing is written to disk.
inline ExperimentResult execute(const ExperimentConfig& cfg) {
    cfg.validate();
    const oracles::Oracle oracle = oracles::make_oracle(cfg.oracle, &cfg.space);
    const auto pool = oracles::sample_pool(oracle, cfg.pool_size, pool_seed(cfg.al.base_seed));
    const al::NetworkSetup nets = cfg.networks();

    const std::size_t n_strat = cfg.strategies.size();
    const std::size_t jobs = n_strat * cfg.repetitions;
    std::vector<std::optional<al::RunTrace>> results(jobs);
    std::vector<std::exception_ptr> errors(jobs);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j; (j = next.fetch_add(1)) < jobs;) {
            const std::size_t s = j / cfg.repetitions, r = j % cfg.repetitions;
            try {
                results[j] = al::al_run(oracle, pool, cfg.strategies[s], nets, cfg.al, run_seeds(cfg.al.base_seed, s, r));
            } catch (...) {
                errors[j] = std::current_exception();
            }
        }
    };
    {
        const std::size_t n_workers = std::min(resolve_workers(cfg.workers), jobs);
        std::vector<std::jthread> threads;
        for (std::size_t w = 1; w < n_workers; ++w) threads.emplace_back(worker);
        worker();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    ExperimentResult res;
    res.traces.resize(n_strat);
    for (std::size_t s = 0; s < n_strat; ++s) {
        const std::string label = strategies::label(cfg.strategies[s]);
        for (std::size_t r = 0; r < cfg.repetitions; ++r) {
            al::RunTrace trace = std::move(*results[s * cfg.repetitions + r]);
            for (auto& row : trace.rows) {
                row.accuracy = as_written(row.accuracy);
                res.rows.push_back({label, r, row.iteration, row.n_labeled, row.accuracy,
                                    cfg.record_wall_time ? row.wall_ms : 0.0});
            }
            res.traces[s].push_back(std::move(trace));
        }
        res.summary.emplace_back(label, al::aggregate_runs(res.traces[s]));
    }
    return res;
}

inline constexpr std::string_view kPartialMarker = "PARTIAL";

/// Runs the experiment and writes trace.csv and summary.csv into out_dir.
/// On failure a PARTIAL marker holding the error is left behind and the
/// exception propagates.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + cfg.out_dir.string() + "': " + ec.message());
    const fs::path marker = cfg.out_dir / kPartialMarker;
    try {
        {
            std::ofstream m(marker);
            m << "running\n";
        }
        ExperimentResult res = execute(cfg);
        write_csv(res.rows, cfg.out_dir / "trace.csv");
        write_summary_csv(res.summary, cfg.out_dir / "summary.csv");
        fs::remove(marker, ec);
        return res;
    } catch (const std::exception& e) {
        std::ofstream m(marker);
        m << "failed: " << e.what() << '\n';
        throw;
    }
}

}  // namespace batchal::harness
