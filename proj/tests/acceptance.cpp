// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "lorachain/lorachain.hpp"
#include "lorachain/verify.hpp"

using namespace lorachain;

namespace {

struct Outcome {
    bool passed;
    std::string detail;
};

Outcome from_check(const CheckResult& c) { return {c.passed, c.detail}; }

Outcome gradient_equivalence() {
    VerifyOptions opt;
    opt.trials = 200;
    opt.tol = 1e-10;
    opt.forward_tol = 1e-12;
    return from_check(check_gradient_equivalence(opt));
}

Outcome finite_differences() {
    VerifyOptions opt;
    opt.fd_trials = 20;
    opt.fd_step = 1e-5;
    opt.fd_tol = 1e-6;
    return from_check(check_finite_differences(opt));
}

Outcome dominance() {
    VerifyOptions opt;
    opt.dominance_samples = 100000;
    return from_check(check_dominance(opt));
}

Outcome flop_audit() { return from_check(check_flop_audit(VerifyOptions{})); }

std::string slurp(const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

Outcome area_maps() {
    std::size_t bad_backward = 0, bad_forward = 0, reduced = 0, cells = 0;
    bool stable = true;
    const std::vector<GridSpec> grids{default_embed_rank_grid(LayerRule::square, 2, 100),
                                      default_embed_rank_grid(LayerRule::expand4, 1, 600),
                                      default_embed_rank_grid(LayerRule::square, 20, 1024),
                                      default_batch_seq_grid(4096, 11008, 128),
                                      default_batch_seq_grid(4096, 4096, 16)};
    const auto dir = std::filesystem::temp_directory_path();
    for (std::size_t g = 0; g < grids.size(); ++g) {
        const auto bwd = area_map(grids[g], Pass::backward);
        const auto fwd = area_map(grids[g], Pass::forward);
        for (std::size_t k = 0; k < bwd.cells.size(); ++k) {
            const auto& cb = bwd.cells[k];
            const auto& cf = fwd.cells[k];
            ++cells;
            if (!cb.best || !cf.best) {
                ++bad_backward;
                continue;
            }
            const ShapeConfig c = grids[g].cell_shape(cb.x, cb.y);
            if (*cb.param_reduction) {
                ++reduced;
                if (*cb.best != VariantId::B1 && *cb.best != VariantId::B4 && *cb.best != VariantId::B5)
                    ++bad_backward;
            }
            const Count io = c.i() * c.o();
            const Count rhs = c.tokens() * (c.i() + c.o());
            // F2 strictly cheaper iff io < bs(i+o); ties go to F1.
            if ((*cf.best == VariantId::F2) != (io < rhs)) ++bad_forward;
        }
        for (const auto* m : {&bwd, &fwd}) {
            const auto p1 = (dir / ("lorachain_acc_a_" + std::to_string(g) + ".csv")).string();
            const auto p2 = (dir / ("lorachain_acc_b_" + std::to_string(g) + ".csv")).string();
            emit_csv(*m, p1);
            emit_csv(area_map(m->spec, m->pass), p2);
            stable = stable && slurp(p1) == slurp(p2) && !slurp(p1).empty();
            std::filesystem::remove(p1);
            std::filesystem::remove(p2);
        }
    }
    std::ostringstream d;
    d << "grids=" << grids.size() << " cells=" << cells << " reduced=" << reduced
      << " bad_backward=" << bad_backward << " bad_forward=" << bad_forward
      << " csv_stable=" << (stable ? "yes" : "no");
    return {bad_backward == 0 && bad_forward == 0 && stable && reduced > 0, d.str()};
}

Outcome timing_sanity() {
    const std::vector<ShapeConfig> shapes{ShapeConfig(1, 512, 64, 64, 32), ShapeConfig(1, 4, 256, 256, 64),
                                          ShapeConfig(4, 256, 128, 128, 64)};
    constexpr int kSessions = 20;
    std::ostringstream d;
    bool ok = true;
    for (const auto& c : shapes) {
        const Count f1 = flops_forward(VariantId::F1, c), f2 = flops_forward(VariantId::F2, c);
        const VariantId predicted = f2 < f1 ? VariantId::F2 : VariantId::F1;
        const double gap = 1.0 - double(std::min(f1, f2)) / double(std::max(f1, f2));
        if (gap < 0.30) {
            d << c.to_string() << " gap too small ";
            ok = false;
            continue;
        }
        int wins = 0;
        for (int s = 0; s < kSessions; ++s) {
            BenchConfig cfg;
            cfg.warmup_iters = 2;
            cfg.repeat_iters = 7;
            cfg.seed = static_cast<std::uint64_t>(s);
            cfg.precision = Precision::single;
            cfg.single_thread = true;
            MeasurementSession session;
            const auto st = detail::time_variants({VariantId::F1, VariantId::F2}, c, cfg);
            const bool f2_faster = st[1].median_ns < st[0].median_ns;
            wins += (predicted == VariantId::F2) == f2_faster;
        }
        d << short_name(predicted) << "@" << c.to_string() << " " << wins << "/" << kSessions << "; ";
        ok = ok && wins * 5 >= kSessions * 4;
    }
    return {ok, d.str()};
}

Outcome memory_model() {
    const Count got = activation_memory_saved(ShapeConfig(22, 2048, 4096, 4096, 512), 2);
    const Count got_other = activation_memory_saved(ShapeConfig(22, 2048, 1024, 11008, 512), 2);
    return {got == 46'137'344u && got_other == got, "b=22 s=2048 r=512 bytes=2 -> " + std::to_string(got)};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 gradient equivalence", gradient_equivalence},
        {"2 finite differences", finite_differences},
        {"3 dominance", dominance},
        {"4 flop audit", flop_audit},
        {"5 area map regression", area_maps},
        {"6 timing sanity", timing_sanity},
        {"7 memory model", memory_model},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.passed;
        std::printf("%s criterion %s: %s\n", o.passed ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
