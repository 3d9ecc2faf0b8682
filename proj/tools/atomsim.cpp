// Command-line front end: perfect sampling, SMC, tuning, diagnostics, tours,
// factory benchmarks and the reproduction experiments.

#include "atomsim/atomext.hpp"
#include "atomsim/config.hpp"
#include "atomsim/diagnostics.hpp"
#include "atomsim/errors.hpp"
#include "atomsim/factory.hpp"
#include "atomsim/random.hpp"
#include "atomsim/regen.hpp"
#include "atomsim/reproduce.hpp"
#include "atomsim/smc.hpp"
#include "atomsim/stats.hpp"
#include "atomsim/tours.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace {

using namespace atomsim;
using nlohmann::json;

constexpr std::uint64_t kSetupStream = 0x5E7A9;
constexpr std::uint64_t kDiagnosticStream = 0xD1A6;

// ----------------------------------------------------------------------------
// Output plumbing

class Output {
public:
    explicit Output(const std::string& path)
    {
        if (path.empty() || path == "-") {
            os_ = &std::cout;
            return;
        }
        file_.open(path, std::ios::binary);
        if (!file_)
            throw ConfigError("cannot write to '" + path + "'");
        os_ = &file_;
    }

    std::ostream& stream() { return *os_; }
    void line(const json& j) { *os_ << j.dump() << '\n'; }
    void text(const std::string& s) { *os_ << s << '\n'; }

private:
    std::ofstream file_;
    std::ostream* os_ = nullptr;
};

/// Everything that identifies a run; hashed into the output header.
struct RunContext {
    std::string command;
    std::uint64_t seed = 0;
    json options = json::object();
    json model = nullptr;
    bool timing = false;

    std::string hash() const
    {
        return config::hex64(config::config_hash(json{{"command", command}, {"options", options}, {"model", model}}));
    }

    json header() const
    {
        return {{"tool", "atomsim"}, {"version", ATOMSIM_VERSION}, {"command", command}, {"seed", seed},
                {"config_hash", hash()}};
    }

    std::string csv_header() const
    {
        return "# atomsim version=" ATOMSIM_VERSION " command=" + command + " seed=" + std::to_string(seed) +
               " config_hash=" + hash();
    }
};

class Stopwatch {
public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

std::string num(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

json cost_json(const CostRecord& c)
{
    return {{"kernel_draws", c.kernel_draws}, {"subcoin_flips", c.subcoin_flips}, {"raw_flips", c.raw_flips}};
}

// ----------------------------------------------------------------------------
// State encoding

json encode(std::size_t x) { return x; }
json encode(double x) { return x; }
json encode(const PmmhState& s)
{
    if (s.atom)
        return {{"atom", true}};
    return {{"atom", false}, {"theta", s.theta}, {"log_w", s.log_w}};
}


template <class Z>
json encode(const Extended<Z>& z)
{
    return z.is_atom() ? json(nullptr) : encode(z.get());
}

template <class T>
json encode(const std::vector<T>& v)
{
    json out = json::array();
    for (const auto& x : v)
        out.push_back(encode(x));
    return out;
}

template <class State>
struct Decoder;

template <>
struct Decoder<std::size_t> {
    static std::size_t decode(const json& j) { return j.get<std::size_t>(); }
};

template <class Z>
struct Decoder<std::vector<Extended<Z>>> {
    static std::vector<Extended<Z>> decode(const json& j)
    {
        std::vector<Extended<Z>> out;
        for (const auto& v : j)
            out.push_back(v.is_null() ? Extended<Z>::atom() : Extended<Z>::of(v.get<Z>()));
        return out;
    }
};

template <>
struct Decoder<PmmhState> {
    static PmmhState decode(const json& j)
    {
        PmmhState s;
        s.atom = j.value("atom", false);
        if (!s.atom) {
            s.theta = j.at("theta").get<Theta>();
            s.log_w = j.at("log_w").get<double>();
        }
        return s;
    }
};

// ----------------------------------------------------------------------------
// Model and kernel construction

struct KernelOptions {
    std::size_t particles = 0;
    double b = 0.5;
    std::string psi_file;

    json to_json() const { return {{"particles", particles}, {"b", b}, {"psi_file", psi_file}}; }
};

std::vector<double> read_psi(const std::string& path, std::size_t horizon)
{
    const json doc = config::read_json_file(path);
    const json& arr = doc.is_object() ? doc.value("psi", json()) : doc;
    if (!arr.is_array())
        throw ConfigError("'" + path + "' has no psi array");
    std::vector<double> psi;
    for (const auto& v : arr) {
        if (!v.is_number())
            throw ConfigError("'" + path + "': psi values must be numbers");
        psi.push_back(v.get<double>());
    }
    if (psi.size() != horizon)
        throw ConfigError("'" + path + "' holds " + std::to_string(psi.size()) + " psi values but the model horizon is " +
                          std::to_string(horizon));
    return psi;
}

AtomizedPmmhKernel<SmcLikelihood> build_pmmh(const config::PmmhConfig& c, std::uint64_t seed)
{
    PmmhSettings s = c.settings;
    if (c.log_atom_w) {
        s.log_atom_w = *c.log_atom_w;
    } else {
        RandomStream setup(derive_seed(seed, kSetupStream));
        s.log_atom_w = estimate_atom_log_w(s.theta_star, c.observations, c.atom_particles, setup);
    }
    return build_atomized_pmmh(SmcLikelihood{c.observations, c.particles}, s);
}

template <class F>
void with_fk_model(const config::ModelConfig& mc, F&& f)
{
    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (FeynmanKacModel<M>)
                f(m);
            else
                throw ConfigError("model '" + mc.kind +
                                  "' is not a Feynman-Kac model; use linear_gaussian, absorbing, sensor or finite_fk");
        },
        mc.model);
}

/// Call f with the atomic kernel described by the configuration.
template <class F>
void with_atomic_kernel(const config::ModelConfig& mc, const KernelOptions& opt, std::uint64_t seed, F&& f)
{
    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, FiniteChain>) {
                f(m);
            } else if constexpr (std::is_same_v<M, config::PmmhConfig>) {
                const auto kernel = build_pmmh(m, seed);
                f(kernel);
            } else {
                if (opt.particles < 1)
                    throw ConfigError("--particles is required for Feynman-Kac models");
                if (opt.psi_file.empty())
                    throw ConfigError("--psi-file is required for Feynman-Kac models (see the tune command)");
                const auto ext = extend_model(m, opt.b, read_psi(opt.psi_file, m.horizon()));
                const PathKernel<M> kernel(ext, opt.particles);
                f(kernel);
            }
        },
        mc.model);
}

SamplerAlgorithm parse_algo(const std::string& s)
{
    return s == "multigamma" ? SamplerAlgorithm::multigamma : SamplerAlgorithm::imputation;
}

std::size_t default_workers()
{
    const char* env = std::getenv("ATOMSIM_WORKERS");
    if (!env || !*env)
        return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1)
        throw ConfigError("ATOMSIM_WORKERS must be a positive integer");
    return static_cast<std::size_t>(v);
}

// ----------------------------------------------------------------------------
// Commands

struct Common {
    std::string model_path;
    std::uint64_t seed = 0;
    std::string out = "-";
    bool timing = false;
};

struct FactoryOptions {
    double beta = 0.0;
    double eps = 0.0;
    std::uint64_t flip_budget = 10'000'000;

    FactoryConfig build() const
    {
        FactoryConfig cfg{beta, eps > 0.0 ? eps : beta / 2.0};
        cfg.flip_budget = flip_budget;
        cfg.validate();
        return cfg;
    }
    json to_json() const
    {
        const auto cfg = build();
        return {{"beta", cfg.beta}, {"eps", cfg.eps}, {"flip_budget", cfg.flip_budget}};
    }
};

struct DiagnoseFlag {
    bool enabled = false;
    std::uint64_t budget = 0;
};

RunContext context_for(const std::string& command, const Common& c, const config::ModelConfig* mc, json options)
{
    RunContext ctx;
    ctx.command = command;
    ctx.seed = c.seed;
    ctx.options = std::move(options);
    ctx.model = mc ? mc->source : json(nullptr);
    ctx.timing = c.timing;
    return ctx;
}

int cmd_sample(const Common& c, const KernelOptions& ko, const FactoryOptions& fo, const std::string& algo_name,
               std::size_t n_samples, const DiagnoseFlag& diag)
{
    const auto mc = config::load_model_config(c.model_path);
    const auto cfg = fo.build();
    const auto algo = parse_algo(algo_name);
    const std::uint64_t diag_budget = diag.budget ? diag.budget : default_diagnostic_budget(cfg.beta);
    auto ctx = context_for("sample", c, &mc,
                           {{"kernel", ko.to_json()}, {"factory", fo.to_json()}, {"algo", algo_name},
                            {"n_samples", n_samples}, {"diagnose", diag.enabled}, {"diagnose_budget", diag_budget}});
    Output out(c.out);
    out.line({{"header", ctx.header()}});
    with_atomic_kernel(mc, ko, c.seed, [&](const auto& kernel) {
        RandomStream rng(c.seed);
        using K = std::decay_t<decltype(kernel)>;
        std::unique_ptr<DiagnosedKernel<K>> watched;
        if (diag.enabled)
            watched = std::make_unique<DiagnosedKernel<K>>(kernel, cfg.beta, diag_budget,
                                                           derive_seed(c.seed, kDiagnosticStream));
        for (std::size_t i = 0; i < n_samples; ++i) {
            const Stopwatch clock;
            const auto before_runs = watched ? watched->runs() : 0;
            const auto before_flips = watched ? watched->flips() : 0;
            const auto rep = watched ? perfect_sample(*watched, algo, cfg, rng) : perfect_sample(kernel, algo, cfg, rng);
            json rec{{"index", i}, {"sample", encode(rep.sample)}, {"algorithm", to_string(rep.algorithm)},
                     {"steps", rep.steps}, {"cost", cost_json(rep.cost)}};
            if (watched)
                rec["diagnostic"] = {{"runs", watched->runs() - before_runs},
                                     {"flips", watched->flips() - before_flips}};
            if (c.timing)
                rec["wall_seconds"] = clock.seconds();
            out.line(rec);
        }
    });
    return 0;
}

int cmd_sample_path(const Common& c, const KernelOptions& ko, const FactoryOptions& fo, const std::string& algo_name,
                    std::size_t n_samples, const DiagnoseFlag& diag)
{
    const auto mc = config::load_model_config(c.model_path);
    const auto cfg = fo.build();
    const auto algo = parse_algo(algo_name);
    if (ko.particles < 1)
        throw ConfigError("--particles must be positive");
    const std::uint64_t diag_budget = diag.budget ? diag.budget : default_diagnostic_budget(cfg.beta);
    auto ctx = context_for("sample-path", c, &mc,
                           {{"kernel", ko.to_json()}, {"factory", fo.to_json()}, {"algo", algo_name},
                            {"n_samples", n_samples}, {"diagnose", diag.enabled}, {"diagnose_budget", diag_budget}});
    Output out(c.out);
    out.line({{"header", ctx.header()}});
    with_fk_model(mc, [&](const auto& model) {
        using M = std::decay_t<decltype(model)>;
        const auto ext = extend_model(model, ko.b, read_psi(ko.psi_file, model.horizon()));
        const PathKernel<M> kernel(ext, ko.particles);
        std::unique_ptr<DiagnosedKernel<PathKernel<M>>> watched;
        if (diag.enabled)
            watched = std::make_unique<DiagnosedKernel<PathKernel<M>>>(kernel, cfg.beta, diag_budget,
                                                                       derive_seed(c.seed, kDiagnosticStream));
        RandomStream rng(c.seed);
        for (std::size_t i = 0; i < n_samples; ++i) {
            const Stopwatch clock;
            json rec{{"index", i}};
            if (watched) {
                const auto before_runs = watched->runs();
                const auto before_flips = watched->flips();
                CostRecord cost;
                std::uint64_t attempts = 0;
                for (;;) {
                    ++attempts;
                    const auto rep = perfect_sample(*watched, algo, cfg, rng);
                    cost += rep.cost;
                    if (!kernel.is_atom(rep.sample)) {
                        rec["path"] = encode(rep.sample);
                        break;
                    }
                }
                rec["attempts"] = attempts;
                rec["cost"] = cost_json(cost);
                rec["diagnostic"] = {{"runs", watched->runs() - before_runs},
                                     {"flips", watched->flips() - before_flips}};
            } else {
                const auto rep = perfect_sample_path(ext, ko.particles, cfg, algo, rng);
                rec["path"] = encode(rep.path);
                rec["attempts"] = rep.attempts;
                rec["cost"] = cost_json(rep.cost);
            }
            if (c.timing)
                rec["wall_seconds"] = clock.seconds();
            out.line(rec);
        }
    });
    return 0;
}

int cmd_tune(const Common& c, std::size_t n_prime, std::size_t reps, const TuningOptions& topt)
{
    const auto mc = config::load_model_config(c.model_path);
    auto ctx = context_for("tune", c, &mc,
                           {{"nprime", n_prime}, {"reps", reps}, {"b", topt.b}, {"safety", topt.safety},
                            {"confidence", topt.confidence}});
    Output out(c.out);
    with_fk_model(mc, [&](const auto& model) {
        const Stopwatch clock;
        RandomStream rng(c.seed);
        const auto report = tune_psi(model, n_prime, reps, rng, topt);
        json doc{{"header", ctx.header()},
                 {"psi", report.psi},
                 {"atom_mass_estimates", report.atom_mass_estimates},
                 {"atom_mass_mean", report.atom_mass_mean},
                 {"atom_mass_lower", report.atom_mass_lower},
                 {"beta_recommendation", report.beta_recommendation},
                 {"b", report.b},
                 {"safety", report.safety},
                 {"confidence", report.confidence},
                 {"n_prime", report.n_prime},
                 {"reps", report.reps}};
        if (c.timing)
            doc["wall_seconds"] = clock.seconds();
        out.text(doc.dump(2));
    });
    return 0;
}

int cmd_smc(const Common& c, std::size_t particles, std::size_t reps)
{
    const auto mc = config::load_model_config(c.model_path);
    auto ctx = context_for("smc", c, &mc, {{"particles", particles}, {"reps", reps}});
    Output out(c.out);
    out.line({{"header", ctx.header()}});
    with_fk_model(mc, [&](const auto& model) {
        using Z = typename std::decay_t<decltype(model)>::Point;
        RandomStream rng(c.seed);
        for (std::size_t r = 0; r < reps; ++r) {
            const Stopwatch clock;
            const auto v = run_smc(model, particles, rng);
            json rec{{"rep", r},
                     {"log_nc", estimate_log_nc(v)},
                     {"terminal_mean", estimate_pi_f(v, [](const Path<Z>& p) { return static_cast<double>(p.back()); })}};
            if (c.timing)
                rec["wall_seconds"] = clock.seconds();
            out.line(rec);
        }
    });
    return 0;
}

template <class K>
std::vector<typename K::State> read_states(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open '" + path + "'");
    std::vector<typename K::State> states;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        try {
            json j = json::parse(line);
            if (j.is_object() && j.contains("header"))
                continue;
            if (j.is_object() && j.contains("sample"))
                j = j["sample"];
            else if (j.is_object() && j.contains("state"))
                j = j["state"];
            else if (j.is_object() && j.contains("path"))
                j = j["path"];
            states.push_back(Decoder<typename K::State>::decode(j));
        } catch (const json::exception& e) {
            throw ConfigError("'" + path + "' line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (states.empty())
        throw ConfigError("'" + path + "' holds no states");
    return states;
}

int cmd_diagnose(const Common& c, const KernelOptions& ko, double beta, std::uint64_t budget,
                 const std::string& states_from, const std::string& states_file, std::size_t n_states,
                 std::size_t thin)
{
    const auto mc = config::load_model_config(c.model_path);
    if (!(beta > 0.0 && beta < 1.0))
        throw ConfigError("--beta must lie in (0, 1)");
    if (budget == 0)
        budget = default_diagnostic_budget(beta);
    if (states_from == "file" && states_file.empty())
        throw ConfigError("--states-from file needs --states-file");
    auto ctx = context_for("diagnose", c, &mc,
                           {{"kernel", ko.to_json()}, {"beta", beta}, {"budget", budget}, {"states_from", states_from},
                            {"states_file", states_file}, {"n_states", n_states}, {"thin", thin}});
    Output out(c.out);
    out.line({{"header", ctx.header()}});
    std::size_t failures = 0;
    with_atomic_kernel(mc, ko, c.seed, [&](const auto& kernel) {
        using K = std::decay_t<decltype(kernel)>;
        RandomStream rng(c.seed);
        const auto states = states_from == "file" ? read_states<K>(states_file)
                                                  : pilot_states(kernel, n_states, thin, rng);
        std::uint64_t flips = 0;
        for (std::size_t i = 0; i < states.size(); ++i) {
            const auto& x = states[i];
            const auto res = run_beta_diagnostic(
                [&](RandomStream& g) { return kernel.is_atom(kernel.sample(x, g)); }, beta, budget, rng);
            flips += res.flips_used;
            failures += res.verdict == DiagnosticVerdict::passed ? 0 : 1;
            out.line({{"index", i},
                      {"state", encode(x)},
                      {"verdict", to_string(res.verdict)},
                      {"stopped_at", res.stopped_at ? json(*res.stopped_at) : json(nullptr)},
                      {"flips_used", res.flips_used}});
        }
        out.line({{"summary",
                   {{"states", states.size()}, {"passed", states.size() - failures}, {"failed", failures},
                    {"flips", flips}, {"budget", budget}}}});
    });
    if (failures > 0) {
        std::fprintf(stderr, "atomsim: diagnostic failed at %zu state(s); beta is probably too large\n", failures);
        return 5;
    }
    return 0;
}

/// Tour features whose stitched averages go into the summary.
template <class State>
json stitched_summary(const TourCollection<State>& tours, bool drop_failed)
{
    if constexpr (std::is_same_v<State, std::size_t>) {
        std::size_t top = 0;
        for (const auto& t : tours.tours)
            for (auto s : t.states)
                top = std::max(top, s);
        json occupancy = json::array();
        for (std::size_t s = 0; s <= top; ++s)
            occupancy.push_back(stitch_tours(tours, [s](std::size_t x) { return x == s ? 1.0 : 0.0; }, drop_failed));
        return {{"occupancy", occupancy}};
    } else if constexpr (std::is_same_v<State, PmmhState>) {
        const double away = stitch_tours(tours, [](const PmmhState& x) { return x.atom ? 0.0 : 1.0; }, drop_failed);
        json theta = json::array();
        for (std::size_t i = 0; i < 4; ++i) {
            const double m = stitch_tours(
                tours, [i](const PmmhState& x) { return x.atom ? 0.0 : x.theta[i]; }, drop_failed);
            theta.push_back(away > 0.0 ? json(m / away) : json(nullptr));
        }
        return {{"atom_fraction", 1.0 - away}, {"theta_mean", theta}};
    } else {
        const double away = stitch_tours(tours, [](const State& x) { return x.back().is_atom() ? 0.0 : 1.0; }, drop_failed);
        const double terminal = stitch_tours(
            tours, [](const State& x) { return x.back().is_atom() ? 0.0 : static_cast<double>(x.back().get()); },
            drop_failed);
        return {{"atom_fraction", 1.0 - away}, {"terminal_mean", away > 0.0 ? json(terminal / away) : json(nullptr)}};
    }
}

int cmd_tours(const Common& c, const KernelOptions& ko, std::size_t n_tours, std::size_t workers,
              std::uint64_t budget, bool with_states)
{
    const auto mc = config::load_model_config(c.model_path);
    // The worker count only affects scheduling, so it stays out of the hashed options.
    auto ctx = context_for("tours", c, &mc,
                           {{"kernel", ko.to_json()}, {"n_tours", n_tours}, {"budget", budget},
                            {"states", with_states}});
    Output out(c.out);
    out.line({{"header", ctx.header()}});
    with_atomic_kernel(mc, ko, c.seed, [&](const auto& kernel) {
        const Stopwatch clock;
        const auto tours = run_parallel_tours(kernel, n_tours, workers, c.seed, budget);
        for (std::size_t i = 0; i < tours.size(); ++i) {
            json rec{{"index", i},
                     {"length", tours.tours[i].length()},
                     {"failed", tours.failed[i] != 0},
                     {"kernel_draws", tours.tours[i].cost.kernel_draws}};
            if (with_states)
                rec["states"] = encode(tours.tours[i].states);
            out.line(rec);
        }
        const bool drop = tours.failure_count() > 0;
        json summary{{"tours", tours.size()}, {"failed", tours.failure_count()}};
        if (tours.failure_count() < tours.size()) {
            const auto st = max_tour_stats(tours);
            summary["max_length"] = st.max_length;
            summary["mean_length"] = st.mean_length;
            summary["variance"] = st.variance;
            summary["david_bound"] = st.david_bound;
            summary["geometric_bounds"] = {st.geometric.lower, st.geometric.upper};
            summary["stitched"] = stitched_summary(tours, drop);
        }
        if (c.timing)
            summary["wall_seconds"] = clock.seconds();
        out.line({{"summary", summary}});
    });
    return 0;
}

int cmd_bench_factory(const Common& c, const FactoryOptions& fo, const std::vector<double>& ps, std::size_t reps,
                      const std::string& coin_kind)
{
    const auto cfg = fo.build();
    if (reps < 1)
        throw ConfigError("--reps must be positive");
    for (double p : ps)
        if (!(p >= cfg.beta && p <= 1.0))
            throw ConfigError("--p values must lie in [beta, 1]");
    auto ctx = context_for("bench-factory", c, nullptr,
                           {{"factory", fo.to_json()}, {"p", ps}, {"reps", reps}, {"coin", coin_kind}});
    Output out(c.out);
    out.text(ctx.csv_header());
    out.text("beta,eps,p,reps,mean_output,mean_subcoin_flips,mean_raw_flips,se" +
             std::string(c.timing ? ",wall_seconds" : ""));
    RandomStream rng(c.seed);
    for (double p : ps) {
        const Stopwatch clock;
        auto coin = CoinSource::bernoulli(p);
        stats::RunningStats output;
        FactoryStats totals;
        for (std::size_t i = 0; i < reps; ++i) {
            const bool bit = coin_kind == "race" ? flip_eps_over_p_coin(coin, cfg, rng, &totals)
                                                 : flip_one_minus_p_coin(coin, cfg, rng, &totals);
            output.add(bit ? 1.0 : 0.0);
        }
        const double n = static_cast<double>(reps);
        const double raw_per = coin_kind == "race" ? static_cast<double>(totals.raw_flips) / n
                                                   : static_cast<double>(totals.raw_flips) /
                                                         static_cast<double>(totals.subcoin_flips);
        std::string row = num(cfg.beta) + "," + num(cfg.eps) + "," + num(p) + "," + std::to_string(reps) + "," +
                          num(output.mean()) + "," + num(static_cast<double>(totals.subcoin_flips) / n) + "," +
                          num(raw_per) + "," + num(output.se());
        if (c.timing)
            row += "," + num(clock.seconds());
        out.text(row);
    }
    return 0;
}

int cmd_reproduce(const Common& c, const std::vector<std::string>& names, const std::string& scale_name)
{
    std::vector<const reproduce::Experiment*> selected;
    for (const auto& key : names) {
        if (key == "all") {
            for (const auto& e : reproduce::experiments())
                selected.push_back(&e);
            continue;
        }
        const auto* e = reproduce::find_experiment(key);
        if (!e) {
            std::string known;
            for (const auto& x : reproduce::experiments())
                known += std::string(" ") + x.name;
            throw ConfigError("unknown experiment '" + key + "'; known:" + known + " (or a criterion number, or all)");
        }
        selected.push_back(e);
    }
    const auto scale = scale_name == "full" ? reproduce::Scale::full : reproduce::Scale::desk;
    auto ctx = context_for("reproduce", c, nullptr, {{"experiments", names}, {"scale", scale_name}});
    Output out(c.out);
    out.text(ctx.csv_header());
    out.text("criterion,experiment,check,value,expected,verdict");
    bool all_passed = true;
    for (const auto* e : selected) {
        const auto res = reproduce::run_experiment(*e, c.seed, scale);
        all_passed = all_passed && res.passed();
        for (const auto& ch : res.checks)
            out.text(std::to_string(res.criterion) + "," + res.name + "," + csv_field(ch.label) + "," + num(ch.value) +
                     "," + csv_field(ch.expected) + "," + (ch.passed ? "pass" : "FAIL"));
        for (const auto& note : res.notes)
            out.text("# note " + std::to_string(res.criterion) + ": " + note);
        if (c.timing)
            out.text("# seconds " + std::to_string(res.criterion) + ": " + num(res.seconds));
        std::fprintf(stderr, "criterion %d %s: %s\n", res.criterion, res.name.c_str(), res.passed() ? "PASS" : "FAIL");
    }
    return all_passed ? 0 : 1;
}

// ----------------------------------------------------------------------------
// Argument wiring

void add_common(CLI::App* sub, Common& c, bool needs_model)
{
    if (needs_model)
        sub->add_option("--model", c.model_path, "Model configuration file (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "Master seed (required)")->required();
    sub->add_option("--out", c.out, "Output file, - for standard output");
    sub->add_flag("--timing", c.timing, "Include wall-clock times (output is then not reproducible byte for byte)");
}

void add_kernel(CLI::App* sub, KernelOptions& k)
{
    sub->add_option("--particles", k.particles, "Particles for the i-cSMC path kernel (Feynman-Kac models)");
    sub->add_option("--b", k.b, "Initial mass of the artificial atom")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--psi-file", k.psi_file, "JSON file with the atom potentials (output of tune)")
        ->check(CLI::ExistingFile);
}

void add_factory(CLI::App* sub, FactoryOptions& f)
{
    sub->add_option("--beta", f.beta, "Lower bound on the coin's success probability")->required();
    sub->add_option("--eps", f.eps, "Minorization constant (default beta / 2)");
    sub->add_option("--flip-budget", f.flip_budget, "Raw flips allowed per scaled-coin call");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"atomsim: perfect simulation and regeneration with artificial atoms"};
    app.set_version_flag("--version", ATOMSIM_VERSION);
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    Common common;
    KernelOptions kernel;
    FactoryOptions factory;
    DiagnoseFlag diag;
    std::string algo = "imputation";
    std::size_t n_samples = 1;
    std::function<int()> action;

    auto* sample = app.add_subcommand("sample", "Perfect samples from the invariant law of an atomic kernel");
    add_common(sample, common, true);
    add_kernel(sample, kernel);
    add_factory(sample, factory);
    sample->add_option("--algo", algo, "imputation or multigamma")->check(CLI::IsMember({"imputation", "multigamma"}));
    sample->add_option("--n-samples", n_samples, "Number of samples");
    sample->add_flag("--diagnose", diag.enabled, "Run the beta diagnostic at every state the sampler visits");
    sample->add_option("--diagnose-budget", diag.budget, "Flips per diagnostic run");
    sample->callback([&] { action = [&] { return cmd_sample(common, kernel, factory, algo, n_samples, diag); }; });

    auto* sample_path = app.add_subcommand("sample-path", "Perfect samples of Feynman-Kac paths");
    add_common(sample_path, common, true);
    add_kernel(sample_path, kernel);
    add_factory(sample_path, factory);
    sample_path->add_option("--algo", algo, "imputation or multigamma")
        ->check(CLI::IsMember({"imputation", "multigamma"}));
    sample_path->add_option("--n-samples", n_samples, "Number of paths");
    sample_path->add_flag("--diagnose", diag.enabled, "Run the beta diagnostic at every state the sampler visits");
    sample_path->add_option("--diagnose-budget", diag.budget, "Flips per diagnostic run");
    sample_path->callback([&] {
        if (kernel.psi_file.empty())
            throw CLI::RequiredError("--psi-file");
        if (kernel.particles == 0)
            throw CLI::RequiredError("--particles");
        action = [&] { return cmd_sample_path(common, kernel, factory, algo, n_samples, diag); };
    });

    std::size_t n_prime = 0;
    std::size_t reps = 20;
    TuningOptions tuning;
    auto* tune = app.add_subcommand("tune", "Tune the atom potentials and recommend beta");
    add_common(tune, common, true);
    tune->add_option("--nprime", n_prime, "Particles for the tuning runs")->required();
    tune->add_option("--reps", reps, "Runs used to estimate the atom mass");
    tune->add_option("--b", tuning.b, "Initial mass of the artificial atom")->check(CLI::Range(0.0, 1.0));
    tune->add_option("--safety", tuning.safety, "Factor applied to the lower bound on the atom mass");
    tune->add_option("--confidence", tuning.confidence, "Confidence level of the lower bound");
    tune->callback([&] { action = [&] { return cmd_tune(common, n_prime, reps, tuning); }; });

    std::size_t smc_particles = 0;
    std::size_t smc_reps = 1;
    auto* smc = app.add_subcommand("smc", "Run the particle filter");
    add_common(smc, common, true);
    smc->add_option("--particles", smc_particles, "Number of particles")->required()->check(CLI::PositiveNumber);
    smc->add_option("--reps", smc_reps, "Independent runs");
    smc->callback([&] { action = [&] { return cmd_smc(common, smc_particles, smc_reps); }; });

    double diag_beta = 0.0;
    std::uint64_t diag_budget = 0;
    std::string states_from = "pilot";
    std::string states_file;
    std::size_t n_states = 100;
    std::size_t thin = 1;
    auto* diagnose = app.add_subcommand("diagnose", "Check a proposed beta at a set of states");
    add_common(diagnose, common, true);
    add_kernel(diagnose, kernel);
    diagnose->add_option("--beta", diag_beta, "Proposed lower bound on Pi(x, atom)")->required();
    diagnose->add_option("--budget", diag_budget, "Flips allowed per state (default 50 (1 - beta) / beta)");
    diagnose->add_option("--states-from", states_from, "pilot or file")->check(CLI::IsMember({"pilot", "file"}));
    diagnose->add_option("--states-file", states_file, "JSON Lines file of states")->check(CLI::ExistingFile);
    diagnose->add_option("--n-states", n_states, "Pilot states to visit");
    diagnose->add_option("--thin", thin, "Chain steps between pilot states");
    diagnose->callback([&] {
        action = [&] {
            return cmd_diagnose(common, kernel, diag_beta, diag_budget, states_from, states_file, n_states, thin);
        };
    });

    std::size_t n_tours = 0;
    std::size_t workers = 0;
    std::uint64_t tour_budget = 10'000'000;
    bool with_states = false;
    auto* tours = app.add_subcommand("tours", "Simulate independent tours in parallel");
    add_common(tours, common, true);
    add_kernel(tours, kernel);
    tours->add_option("--n-tours", n_tours, "Number of tours")->required()->check(CLI::PositiveNumber);
    tours->add_option("--workers", workers, "Worker threads (default: ATOMSIM_WORKERS or 1)");
    tours->add_option("--budget", tour_budget, "Maximum states per tour");
    tours->add_flag("--states", with_states, "Write the visited states of every tour");
    tours->callback([&] {
        action = [&] {
            return cmd_tours(common, kernel, n_tours, workers ? workers : default_workers(), tour_budget, with_states);
        };
    });

    std::vector<double> ps;
    std::size_t bench_reps = 100'000;
    std::string coin_kind = "subcoin";
    auto* bench = app.add_subcommand("bench-factory", "Frequencies and costs of the factory coins");
    add_common(bench, common, false);
    add_factory(bench, factory);
    bench->add_option("--p", ps, "True success probabilities (repeatable)")->required();
    bench->add_option("--reps", bench_reps, "Coin flips per configuration");
    bench->add_option("--coin", coin_kind, "subcoin for the (1-p)/(1-eps) coin, race for the eps/p coin")
        ->check(CLI::IsMember({"subcoin", "race"}));
    bench->callback([&] { action = [&] { return cmd_bench_factory(common, factory, ps, bench_reps, coin_kind); }; });

    std::vector<std::string> experiments{"all"};
    std::string scale = "desk";
    auto* repro = app.add_subcommand("reproduce", "Run the acceptance experiments and print verdicts");
    add_common(repro, common, false);
    repro->add_option("--experiment", experiments, "Experiment names or criterion numbers, or all");
    repro->add_option("--scale", scale, "desk or full")->check(CLI::IsMember({"desk", "full"}));
    repro->callback([&] { action = [&] { return cmd_reproduce(common, experiments, scale); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        return action();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "atomsim: configuration error: %s\n", e.what());
        return 2;
    } catch (const ParticleDeath& e) {
        std::fprintf(stderr, "atomsim: particle death: %s\n", e.what());
        return 3;
    } catch (const BudgetExceeded& e) {
        std::fprintf(stderr, "atomsim: factory budget exceeded: %s\n", e.what());
        return 4;
    } catch (const DrawBudgetExceeded& e) {
        std::fprintf(stderr, "atomsim: draw budget exceeded: %s\n", e.what());
        return 4;
    } catch (const DiagnosticFailure& e) {
        std::fprintf(stderr, "atomsim: diagnostic failure: %s\n", e.what());
        return 5;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "atomsim: error: %s\n", e.what());
        return 1;
    }
}
