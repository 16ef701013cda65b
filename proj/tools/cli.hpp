#pragma once

// `lorachain` command-line front end. run_cli() is the whole program; main()
// only forwards argv, so tests can drive it in-process.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lorachain/json.hpp"
#include "lorachain/lorachain.hpp"
#include "lorachain/verify.hpp"

namespace lorachain::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,
    kNumeric = 3,
    kVerifyFailed = 4,
    kIo = 5,
};

struct UsageError : Error {
    using Error::Error;
};

struct ShapeArgs {
    std::int64_t b = 0, s = 0, i = 0, o = 0, r = 0;

    void add_to(CLI::App& app, bool required = true) {
        for (auto [name, ptr, desc] : {std::tuple{"--b", &b, "batch size"},
                                       std::tuple{"--s", &s, "sequence length"},
                                       std::tuple{"--i", &i, "input dimension"},
                                       std::tuple{"--o", &o, "output dimension"},
                                       std::tuple{"--r", &r, "adapter rank"}}) {
            auto* opt = app.add_option(name, *ptr, desc);
            if (required) opt->required();
        }
    }
    ShapeConfig shape() const { return ShapeConfig(b, s, i, o, r); }
};

struct BenchArgs {
    std::size_t warmup = 2;
    std::size_t repeats = 7;
    std::uint64_t seed = 0;
    std::string precision = "single";

    void add_to(CLI::App& app) {
        app.add_option("--warmup", warmup, "discarded warmup iterations")->capture_default_str();
        app.add_option("--repeats", repeats, "timed iterations (>= 3)")->capture_default_str();
        app.add_option("--seed", seed, "operand seed")->capture_default_str();
        app.add_option("--precision", precision, "high|single")
            ->check(CLI::IsMember({"high", "single"}))
            ->capture_default_str();
        app.add_flag("--single-thread,!--multi-thread", single_thread_flag,
                     "pin matmul to one thread (default)");
    }
    BenchConfig config() const {
        BenchConfig cfg;
        cfg.warmup_iters = warmup;
        cfg.repeat_iters = repeats;
        cfg.seed = seed;
        cfg.precision = precision == "high" ? Precision::high : Precision::single;
        cfg.single_thread = single_thread_flag;
        return cfg;
    }
    bool single_thread_flag = true;
};

inline std::string fmt_count(Count c) { return std::to_string(c); }

inline void print_json(std::ostream& out, const nlohmann::json& j) { out << j.dump(2) << '\n'; }

inline void print_cost_table(std::ostream& out, const CostReport& rep) {
    out << "shape " << rep.shape.to_string() << "  param_reduction=" << (rep.param_reduction ? "yes" : "no")
        << '\n';
    out << std::left << std::setw(11) << "variant" << std::right << std::setw(22) << "flops" << std::setw(18)
        << "workspace" << '\n';
    for (const auto& v : rep.variants) {
        out << std::left << std::setw(11) << long_name(v.variant) << std::right << std::setw(22) << v.flops
            << std::setw(18) << (v.workspace_elements ? fmt_count(*v.workspace_elements) : "-") << '\n';
    }
    out << "baseline forward " << rep.baseline.forward_flops << ", backward " << rep.baseline.backward_flops
        << ", cached XA elements " << rep.baseline.saved_activation_elements << '\n';
}

inline void print_plan(std::ostream& out, const PairPlan& p) {
    out << "shape " << p.shape.to_string() << "  criterion=" << criterion_name(p.criterion)
        << "  param_reduction=" << (p.parameter_reduction ? "yes" : "no") << '\n';
    out << "choice " << short_name(p.forward_choice) << " + " << short_name(p.backward_choice) << "  ("
        << p.total_flops() << " flops)\n";
    for (const auto& e : p.evidence) {
        const bool chosen = e.variant == p.forward_choice || e.variant == p.backward_choice;
        out << (chosen ? " * " : "   ") << std::left << std::setw(4) << short_name(e.variant) << std::right
            << std::setw(22) << e.flops;
        if (e.timing) out << std::setw(16) << std::fixed << std::setprecision(0) << e.timing->median_ns << " ns";
        out << '\n';
    }
}

inline void warn_param_reduction(std::ostream& err, const PairPlan& p, const std::string& what = {}) {
    if (!p.parameter_reduction) {
        err << "warning: " << (what.empty() ? "" : what + ": ") << "r(i+o) >= io for " << p.shape.to_string()
            << "; the adapter does not reduce parameters\n";
    }
}

struct LayerFile {
    std::vector<LayerSpec> layers;
    std::optional<std::int64_t> b, s, r;
};

/// Either `[{"name","in","out"}, ...]` or
/// `{"layers": [...], "defaults": {"b","s","r"}}`.
inline LayerFile read_layer_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read layer file " + path);
    nlohmann::json doc;
    try {
        f >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("layer file " + path + " is not valid JSON: " + e.what());
    }
    LayerFile lf;
    const nlohmann::json* list = &doc;
    if (doc.is_object()) {
        if (!doc.contains("layers")) throw UsageError("layer file object needs a \"layers\" list");
        list = &doc.at("layers");
        if (doc.contains("defaults")) {
            const auto& d = doc.at("defaults");
            if (d.contains("b")) lf.b = d.at("b").get<std::int64_t>();
            if (d.contains("s")) lf.s = d.at("s").get<std::int64_t>();
            if (d.contains("r")) lf.r = d.at("r").get<std::int64_t>();
        }
    }
    if (!list->is_array()) throw UsageError("layer list must be a JSON array");
    try {
        for (const auto& rec : *list) {
            LayerSpec l{rec.at("name").get<std::string>(), rec.at("in").get<std::int64_t>(),
                        rec.at("out").get<std::int64_t>()};
            if (l.name.empty()) throw UsageError("layer with empty name");
            if (l.in < 1 || l.out < 1) throw UsageError("layer " + l.name + " has non-positive dims");
            lf.layers.push_back(std::move(l));
        }
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("bad layer record: ") + e.what());
    }
    return lf;
}

inline void print_verify(std::ostream& out, const VerifyReport& rep) {
    for (const auto& c : rep.checks) out << (c.passed ? "PASS " : "FAIL ") << c.name << "  " << c.detail << '\n';
}

inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"LoRA forward/backward variant cost model, selector and checker", "lorachain"};
    app.require_subcommand(1);

    // flops
    auto* flops_cmd = app.add_subcommand("flops", "exact FLOP/workspace table for one shape");
    ShapeArgs flops_shape;
    bool flops_json = false;
    flops_shape.add_to(*flops_cmd);
    flops_cmd->add_flag("--json", flops_json, "machine-readable output");

    // select
    auto* select_cmd = app.add_subcommand("select", "choose the best forward/backward pair");
    ShapeArgs select_shape;
    BenchArgs select_bench;
    std::string select_criterion = "flops";
    bool select_json = false;
    select_shape.add_to(*select_cmd);
    select_cmd->add_option("--criterion", select_criterion, "flops|time")
        ->check(CLI::IsMember({"flops", "time"}))
        ->capture_default_str();
    select_bench.add_to(*select_cmd);
    select_cmd->add_flag("--json", select_json, "machine-readable output");

    // plan
    auto* plan_cmd = app.add_subcommand("plan", "plan every layer listed in a layer file");
    std::string plan_file;
    std::optional<std::int64_t> plan_b, plan_s, plan_r;
    std::string plan_criterion = "flops";
    BenchArgs plan_bench;
    bool plan_json = false;
    plan_cmd->add_option("--layers", plan_file, "layer spec JSON")->required();
    plan_cmd->add_option("--b", plan_b, "batch size (overrides file defaults)");
    plan_cmd->add_option("--s", plan_s, "sequence length (overrides file defaults)");
    plan_cmd->add_option("--r", plan_r, "adapter rank (overrides file defaults)");
    plan_cmd->add_option("--criterion", plan_criterion, "flops|time")
        ->check(CLI::IsMember({"flops", "time"}))
        ->capture_default_str();
    plan_bench.add_to(*plan_cmd);
    plan_cmd->add_flag("--json", plan_json, "machine-readable output");

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "gradient, finite-difference, dominance and FLOP checks");
    VerifyOptions vopt;
    bool verify_json = false;
    verify_cmd->add_option("--trials", vopt.trials, "random gradient-equivalence configurations")
        ->capture_default_str();
    verify_cmd->add_option("--seed", vopt.seed, "random seed")->capture_default_str();
    verify_cmd->add_option("--tol", vopt.tol, "backward relative tolerance")->capture_default_str();
    verify_cmd->add_flag("--json", verify_json, "machine-readable output");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "time a plan against the cache-XA baseline");
    ShapeArgs bench_shape;
    BenchArgs bench_args;
    std::string bench_fwd, bench_bwd;
    bool bench_json = false;
    bench_shape.add_to(*bench_cmd);
    bench_args.add_to(*bench_cmd);
    bench_cmd->add_option("--forward", bench_fwd, "forward variant (default: FLOP-optimal)");
    bench_cmd->add_option("--backward", bench_bwd, "backward variant (default: FLOP-optimal)");
    bench_cmd->add_flag("--json", bench_json, "machine-readable output");

    // map
    auto* map_cmd = app.add_subcommand("map", "best-variant area map as CSV");
    std::string map_axis, map_rule = "square", map_out, map_pass = "backward";
    std::optional<std::int64_t> mb, ms, mi, mo, mr;
    std::optional<Count> xf, xl, xs, yf, yl, ys;
    bool xg = false, yg = false;
    map_cmd->add_option("--axis", map_axis, "embed-rank|batch-seq")
        ->required()
        ->check(CLI::IsMember({"embed-rank", "batch-seq"}));
    map_cmd->add_option("--layer-rule", map_rule, "square|expand4|explicit")
        ->check(CLI::IsMember({"square", "expand4", "explicit"}))
        ->capture_default_str();
    map_cmd->add_option("--out", map_out, "output CSV path ('-' for stdout)")->required();
    map_cmd->add_option("--pass", map_pass, "forward|backward")
        ->check(CLI::IsMember({"forward", "backward"}))
        ->capture_default_str();
    map_cmd->add_option("--b", mb, "fixed batch size (embed-rank)");
    map_cmd->add_option("--s", ms, "fixed sequence length (embed-rank)");
    map_cmd->add_option("--i", mi, "fixed input dim (batch-seq)");
    map_cmd->add_option("--o", mo, "fixed output dim (explicit rule)");
    map_cmd->add_option("--r", mr, "fixed rank (batch-seq)");
    map_cmd->add_option("--x-first", xf);
    map_cmd->add_option("--x-last", xl);
    map_cmd->add_option("--x-step", xs);
    map_cmd->add_flag("--x-geometric", xg, "x step multiplies instead of adds");
    map_cmd->add_option("--y-first", yf);
    map_cmd->add_option("--y-last", yl);
    map_cmd->add_option("--y-step", ys);
    map_cmd->add_flag("--y-geometric", yg, "y step multiplies instead of adds");

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*flops_cmd) {
            const auto rep = cost_report(flops_shape.shape());
            if (flops_json) print_json(out, to_json(rep));
            else print_cost_table(out, rep);
            return kOk;
        }
        if (*select_cmd) {
            const auto c = select_shape.shape();
            const PairPlan p = select_criterion == "flops" ? select_by_flops(c)
                                                           : select_by_time(c, select_bench.config());
            warn_param_reduction(err, p);
            if (select_json) print_json(out, to_json(p));
            else print_plan(out, p);
            return kOk;
        }
        if (*plan_cmd) {
            const LayerFile lf = read_layer_file(plan_file);
            const auto b = plan_b ? plan_b : lf.b;
            const auto s = plan_s ? plan_s : lf.s;
            const auto r = plan_r ? plan_r : lf.r;
            if (!b || !s || !r) throw UsageError("b, s and r must come from flags or the file's defaults");
            const auto mp = plan_model(lf.layers, *b, *s, *r, *parse_criterion(plan_criterion), plan_bench.config());
            for (const auto& l : mp.layers) warn_param_reduction(err, l.plan, l.name);
            if (plan_json) {
                print_json(out, to_json(mp));
            } else {
                out << std::left << std::setw(24) << "layer" << std::setw(14) << "in x out" << std::setw(8)
                    << "choice" << std::right << std::setw(20) << "flops" << std::setw(20) << "baseline" << '\n';
                for (const auto& l : mp.layers) {
                    const auto& p = l.plan;
                    out << std::left << std::setw(24) << l.name << std::setw(14)
                        << (std::to_string(p.shape.i()) + "x" + std::to_string(p.shape.o())) << std::setw(8)
                        << (short_name(p.forward_choice) + "+" + short_name(p.backward_choice)) << std::right
                        << std::setw(20) << p.total_flops() << std::setw(20)
                        << (l.baseline.forward_flops + l.baseline.backward_flops) << '\n';
                }
                out << "total plan flops " << mp.total_plan_flops << ", baseline " << mp.total_baseline_flops
                    << ", activation elements not cached " << mp.activation_elements_saved << '\n';
            }
            return kOk;
        }
        if (*verify_cmd) {
            if (vopt.trials < 1) throw UsageError("--trials must be >= 1");
            const auto rep = run_verification(vopt);
            if (verify_json) {
                nlohmann::json checks = nlohmann::json::array();
                for (const auto& c : rep.checks)
                    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"worst", c.worst}, {"detail", c.detail}});
                print_json(out, {{"passed", rep.passed()}, {"checks", checks}});
            } else {
                print_verify(out, rep);
            }
            return rep.passed() ? kOk : kVerifyFailed;
        }
        if (*bench_cmd) {
            const auto c = bench_shape.shape();
            PairPlan plan = select_by_flops(c);
            auto pick = [](const std::string& name, Pass pass) {
                const auto v = parse_variant(name);
                if (!v || pass_of(*v) != pass || !is_executable(*v))
                    throw UsageError("not an executable " + std::string(pass_name(pass)) + " variant: " + name);
                return *v;
            };
            if (!bench_fwd.empty()) plan.forward_choice = pick(bench_fwd, Pass::forward);
            if (!bench_bwd.empty()) plan.backward_choice = pick(bench_bwd, Pass::backward);
            const auto rep = compare_to_baseline(c, plan, bench_args.config());
            for (const auto* st : {&rep.plan, &rep.baseline})
                if (st->warning) err << "warning: " << *st->warning << '\n';
            if (bench_json) {
                print_json(out, to_json(rep));
            } else {
                out << "shape " << c.to_string() << "  plan " << short_name(rep.forward_choice) << "+"
                    << short_name(rep.backward_choice) << '\n'
                    << std::fixed << std::setprecision(1) << "plan     median " << rep.plan.median_ns / 1e3
                    << " us  mean " << rep.plan.mean_ns / 1e3 << " us  flops " << rep.plan_flops << '\n'
                    << "baseline median " << rep.baseline.median_ns / 1e3 << " us  mean "
                    << rep.baseline.mean_ns / 1e3 << " us  flops " << rep.baseline_flops << '\n'
                    << std::setprecision(2) << "measured speedup " << rep.measured_speedup_percent
                    << " %  predicted (FLOPs) " << rep.predicted_speedup_percent << " %\n";
            }
            return kOk;
        }
        if (*map_cmd) {
            const LayerRule rule = map_rule == "square"    ? LayerRule::square
                                   : map_rule == "expand4" ? LayerRule::expand4
                                                           : LayerRule::explicit_dims;
            auto positive = [](std::optional<std::int64_t> v, Count fallback, const char* name) -> Count {
                if (!v) return fallback;
                if (*v < 1) throw UsageError(std::string("--") + name + " must be >= 1");
                return static_cast<Count>(*v);
            };
            GridSpec g;
            if (map_axis == "embed-rank") {
                g = default_embed_rank_grid(rule, positive(mb, 2, "b"), positive(ms, 100, "s"));
                if (rule == LayerRule::explicit_dims) {
                    if (!mo) throw UsageError("--layer-rule explicit with embed-rank needs --o");
                    g.o = positive(mo, 1, "o");
                }
            } else {
                g = default_batch_seq_grid(positive(mi, 4096, "i"), positive(mo, 11008, "o"), positive(mr, 128, "r"));
                g.rule = rule;
            }
            if (xf) g.x.first = *xf;
            if (xl) g.x.last = *xl;
            if (xs) g.x.step = *xs;
            g.x.geometric = xg;
            if (yf) g.y.first = *yf;
            if (yl) g.y.last = *yl;
            if (ys) g.y.step = *ys;
            g.y.geometric = yg;
            AreaMap m;
            try {
                m = area_map(g, map_pass == "forward" ? Pass::forward : Pass::backward);
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            if (map_out == "-") emit_csv(m, out);
            else emit_csv(m, map_out);
            std::size_t invalid = 0;
            for (const auto& c : m.cells) invalid += !c.best;
            err << "map: " << m.cells.size() << " cells (" << invalid << " invalid)"
                << (map_out == "-" ? "" : " -> " + map_out) << '\n';
            return kOk;
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ShapeError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const UnsupportedVariantError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kIo;
    } catch (const OverflowError& e) {
        err << "error: " << e.what() << '\n';
        return kNumeric;
    } catch (const NumericError& e) {
        err << "error: " << e.what() << '\n';
        return kNumeric;
    } catch (const MeasurementError& e) {
        err << "error: " << e.what() << '\n';
        return kNumeric;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kUsage;
}

} // namespace lorachain::cli
