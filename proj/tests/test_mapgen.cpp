#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lorachain/mapgen.hpp"
#include "lorachain/selector.hpp"

using namespace lorachain;
using V = VariantId;

namespace {

std::string csv(const AreaMap& m) {
    std::ostringstream out;
    emit_csv(m, out);
    return out.str();
}

std::size_t count_lines(const std::string& s) {
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

} // namespace

TEST(AxisRange, LinearAndGeometric) {
    EXPECT_EQ((AxisRange{8, 40, 8, false}.values()), (std::vector<Count>{8, 16, 24, 32, 40}));
    EXPECT_EQ((AxisRange{8, 100, 2, true}.values()), (std::vector<Count>{8, 16, 32, 64}));
    EXPECT_THROW((AxisRange{5, 4, 1, false}.values()), std::invalid_argument);
    EXPECT_THROW((AxisRange{1, 4, 0, false}.values()), std::invalid_argument);
    EXPECT_THROW((AxisRange{1, 4, 1, true}.values()), std::invalid_argument);
}

TEST(AreaMap, SquareGridBackwardNeverB2B3UnderParamReduction) {
    const auto spec = default_embed_rank_grid(LayerRule::square, 2, 100);
    const auto m = area_map(spec, Pass::backward);
    std::size_t reduced = 0;
    for (const auto& c : m.cells) {
        ASSERT_TRUE(c.best);
        if (*c.param_reduction) {
            ++reduced;
            ASSERT_TRUE(*c.best == V::B1 || *c.best == V::B4 || *c.best == V::B5);
        }
    }
    EXPECT_GT(reduced, 0u);
}

TEST(AreaMap, SingleCellEqualsSelectByFlops) {
    GridSpec g;
    g.axes = GridAxes::batch_seq;
    g.x = {3, 3, 1, false};
    g.y = {77, 77, 1, false};
    g.rule = LayerRule::explicit_dims;
    g.i = 300;
    g.o = 500;
    g.r = 16;
    const auto plan = select_by_flops(ShapeConfig(3, 77, 300, 500, 16));
    const auto fm = area_map(g, Pass::forward);
    const auto bm = area_map(g, Pass::backward);
    ASSERT_EQ(fm.cells.size(), 1u);
    EXPECT_EQ(*fm.cells[0].best, plan.forward_choice);
    EXPECT_EQ(*bm.cells[0].best, plan.backward_choice);
    EXPECT_EQ(count_lines(csv(fm)), 2u);
}

TEST(AreaMap, LlamaMlpForwardBoundaryFollowsCrossover) {
    const auto m = area_map(default_batch_seq_grid(4096, 11008, 128), Pass::forward);
    const Count io = 4096ull * 11008, ipo = 4096 + 11008;
    std::size_t f1 = 0, f2 = 0;
    for (const auto& c : m.cells) {
        const bool merged_cheaper = io < c.x * c.y * ipo;
        ASSERT_EQ(*c.best == V::F2, merged_cheaper) << c.x << "," << c.y;
        (*c.best == V::F2 ? f2 : f1)++;
    }
    EXPECT_GT(f1, 0u);
    EXPECT_GT(f2, 0u);
}

TEST(AreaMap, ParamReductionFlagMatchesClosedForm) {
    for (LayerRule rule : {LayerRule::square, LayerRule::expand4}) {
        GridSpec g = default_embed_rank_grid(rule, 1, 600);
        g.x = {256, 4096, 256, false};
        const auto m = area_map(g, Pass::backward);
        for (const auto& c : m.cells) {
            const Count i = c.x, o = rule == LayerRule::square ? c.x : 4 * c.x, r = c.y;
            ASSERT_EQ(*c.param_reduction, r * (i + o) < i * o);
            if (rule == LayerRule::square) {
                ASSERT_EQ(*c.param_reduction, 2 * r < i);
            }
        }
    }
}

TEST(AreaMap, CellsArePureFunctionsOfCoordinates) {
    const auto spec = default_embed_rank_grid(LayerRule::expand4, 20, 1024);
    const auto m = area_map(spec, Pass::backward);
    for (std::size_t k = 0; k < m.cells.size(); k += 97) {
        const auto& c = m.cells[k];
        const auto again = compute_cell(spec, Pass::backward, c.x, c.y);
        EXPECT_EQ(again.best, c.best);
        EXPECT_EQ(again.flops_all, c.flops_all);
    }
}

TEST(AreaMap, ForwardBoundaryContiguousAlongAxisLines) {
    for (const auto& spec : {default_embed_rank_grid(LayerRule::square, 2, 100),
                             default_embed_rank_grid(LayerRule::expand4, 1, 600),
                             default_batch_seq_grid(4096, 11008, 128)}) {
        const auto m = area_map(spec, Pass::forward);
        const auto xs = spec.x.values();
        const auto ys = spec.y.values();
        auto at = [&](std::size_t xi, std::size_t yi) { return *m.cells[xi * ys.size() + yi].best; };
        for (std::size_t xi = 0; xi < xs.size(); ++xi) {
            int changes = 0;
            for (std::size_t yi = 1; yi < ys.size(); ++yi) changes += at(xi, yi) != at(xi, yi - 1);
            ASSERT_LE(changes, 1);
        }
        for (std::size_t yi = 0; yi < ys.size(); ++yi) {
            int changes = 0;
            for (std::size_t xi = 1; xi < xs.size(); ++xi) changes += at(xi, yi) != at(xi - 1, yi);
            ASSERT_LE(changes, 1);
        }
    }
}

TEST(AreaMap, OverflowCellsMarkedInvalid) {
    GridSpec g;
    g.axes = GridAxes::batch_seq;
    g.x = {1, 1, 1, false};
    g.y = {1ull << 40, 1ull << 40, 1, false};
    g.rule = LayerRule::explicit_dims;
    g.i = 1ull << 20;
    g.o = 1ull << 20;
    g.r = 8;
    const auto m = area_map(g, Pass::backward);
    ASSERT_EQ(m.cells.size(), 1u);
    EXPECT_FALSE(m.cells[0].best);
    const std::string text = csv(m);
    EXPECT_NE(text.find(",invalid,"), std::string::npos);
    // Same column count as the header.
    const auto header = text.substr(0, text.find('\n'));
    const auto row = text.substr(text.find('\n') + 1);
    EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
}

TEST(EmitCsv, HeaderRowsAndStability) {
    GridSpec g = default_embed_rank_grid(LayerRule::square, 2, 100);
    g.x = {256, 1024, 256, false};
    g.y = {8, 64, 8, false};
    const auto m = area_map(g, Pass::backward);
    const std::string text = csv(m);
    EXPECT_EQ(text.substr(0, text.find('\n')),
              "x,y,variant,param_reduction,flops_best,flops_B1,flops_B2,flops_B3,flops_B4,flops_B5");
    EXPECT_EQ(count_lines(text), 1u + 4 * 8);
    EXPECT_EQ(text.back(), '\n');
    EXPECT_EQ(text, csv(area_map(g, Pass::backward)));

    const auto dir = std::filesystem::temp_directory_path();
    const auto p1 = (dir / "lorachain_map_a.csv").string();
    const auto p2 = (dir / "lorachain_map_b.csv").string();
    emit_csv(m, p1);
    emit_csv(m, p2);
    auto slurp = [](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(f), {});
    };
    EXPECT_EQ(slurp(p1), text);
    EXPECT_EQ(slurp(p1), slurp(p2));
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST(EmitCsv, UnwritablePathIsIoError) {
    const auto m = area_map(default_batch_seq_grid(8, 8, 1), Pass::forward);
    EXPECT_THROW(emit_csv(m, std::string("/nonexistent-dir/x/y.csv")), IoError);
}
