// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>

#include "mfn/common/errors.hpp"
#include "mfn/fusiongraph/fusion_graph.hpp"

namespace mfn::fusiongraph {
namespace {

// Independent depth bookkeeping: list the trainable layers met on the main path
// between two fusion points and count them.
int trainable_layers_between_fusions(int blocks, bool through_squeeze) {
    std::vector<std::string> path;
    for (int b = 0; b < blocks; ++b) {
        path.push_back("conv1");
        path.push_back("bn1");
        path.push_back("relu");
        path.push_back("conv2");
        path.push_back("bn2");
        path.push_back("add_residual");
        path.push_back("relu");
    }
    if (through_squeeze) {
        path.push_back("squeeze");
        path.push_back("bn_squeeze");
    }
    return static_cast<int>(std::count_if(path.begin(), path.end(), [](const std::string& layer) {
        return layer.rfind("conv", 0) == 0 || layer == "squeeze";
    }));
}

nets::ModelConfig multistage(int stages, int blocks) {
    nets::ModelConfig cfg;
    cfg.stages = stages;
    cfg.blocks_per_stage = blocks;
    cfg.base_channels = 4;
    cfg.input_shape = {8, 8, 8};
    return cfg;
}

TEST(EnumerateFusions, ThreeStagesThreeBlocks) {
    const auto g = enumerate_fusions(3, 3);
    ASSERT_EQ(g.events.size(), 10u);
    const std::vector<FusionEvent> expected{
        {1, FusionOp::multiply, {{-1, 7}, {0, 7}}},
        {2, FusionOp::add, {{-1, 6}, {1, 0}}},
        {3, FusionOp::add, {{0, 6}, {1, 0}}},
        {4, FusionOp::multiply, {{2, 7}, {3, 7}}},
        {5, FusionOp::add, {{2, 6}, {4, 0}}},
        {6, FusionOp::add, {{3, 6}, {4, 0}}},
        {7, FusionOp::multiply, {{5, 7}, {6, 7}}},
        {8, FusionOp::add, {{5, 6}, {7, 0}}},
        {9, FusionOp::add, {{6, 6}, {7, 0}}},
        {10, FusionOp::concat, {{8, 0}, {9, 0}}},
    };
    EXPECT_EQ(g.events, expected);
    EXPECT_EQ(g.terminal(), 10);
    EXPECT_NO_THROW(g.validate());
}

TEST(EnumerateFusions, SingleStage) {
    for (int n = 1; n <= 5; ++n) {
        const auto g = enumerate_fusions(1, n);
        ASSERT_EQ(g.events.size(), 4u);
        EXPECT_EQ(g.events.back().op, FusionOp::concat);
        EXPECT_EQ(std::count_if(g.events.begin(), g.events.end(),
                                [](const FusionEvent& e) { return e.op == FusionOp::multiply; }),
                  1);
    }
}

TEST(EnumerateFusions, DepthsMatchLayerCountingOracle) {
    for (int n = 1; n <= 5; ++n) {
        const int multiply_depth = trainable_layers_between_fusions(n, true);
        const int add_depth = trainable_layers_between_fusions(n, false);
        const auto g = enumerate_fusions(3, n);
        for (const auto& e : g.events) {
            if (e.op == FusionOp::multiply) {
                for (const auto& in : e.inputs) EXPECT_EQ(in.depth, multiply_depth);
            } else if (e.op == FusionOp::add) {
                EXPECT_EQ(e.inputs[0].depth, add_depth);
                EXPECT_EQ(e.inputs[1].depth, 0);
            }
        }
    }
    const auto g = enumerate_fusions(3, 1);
    EXPECT_EQ(g.events[0].inputs[0].depth, 3);
    EXPECT_EQ(g.events[1].inputs[0].depth, 2);
}

TEST(EnumerateFusions, InvariantsHoldAcrossRange) {
    for (int l = 1; l <= 5; ++l) {
        for (int n = 1; n <= 5; ++n) {
            const auto g = enumerate_fusions(l, n);
            EXPECT_EQ(static_cast<int>(g.events.size()), 3 * l + 1);
            EXPECT_NO_THROW(g.validate());
            for (const auto& e : g.events) {
                if (e.op != FusionOp::multiply) continue;
                const int product = e.index;
                const auto& add = g.events[static_cast<std::size_t>(product)];
                EXPECT_EQ(e.inputs[0].depth, add.inputs[0].depth + 1);
            }
            EXPECT_EQ(to_json(g).dump(), to_json(enumerate_fusions(l, n)).dump());
        }
    }
}

TEST(EnumerateFusions, RejectsOutOfRange) {
    EXPECT_THROW(enumerate_fusions(0, 3), ConfigError);
    EXPECT_THROW(enumerate_fusions(6, 3), ConfigError);
    EXPECT_THROW(enumerate_fusions(3, 0), ConfigError);
    EXPECT_THROW(enumerate_fusions(3, 6), ConfigError);
}

TEST(VerifyAgainstNetwork, MatchesBuiltModel) {
    for (int l = 1; l <= 3; ++l) {
        for (int n = 1; n <= 3; ++n) {
            nets::Network net(multistage(l, n));
            const auto report = verify_against_network(enumerate_fusions(l, n), net);
            EXPECT_TRUE(report.match) << l << "x" << n << ": "
                                      << (report.mismatches.empty() ? "" : report.mismatches.front());
            EXPECT_EQ(report.observed_events, 3 * l + 1);
        }
    }
}

TEST(VerifyAgainstNetwork, ReportsMissingStage) {
    nets::Network net(multistage(2, 3));
    const auto report = verify_against_network(enumerate_fusions(3, 3), net);
    EXPECT_FALSE(report.match);
    EXPECT_EQ(report.expected_events, 10);
    EXPECT_EQ(report.observed_events, 7);
    for (const char* missing : {"F8 = add", "F9 = add", "F10 = concat"}) {
        EXPECT_TRUE(std::any_of(report.mismatches.begin(), report.mismatches.end(),
                                [&](const std::string& m) { return m.rfind(missing, 0) == 0; }))
            << missing;
    }
}

TEST(VerifyAgainstNetwork, FlagsPerturbedDepth) {
    auto g = enumerate_fusions(3, 3);
    g.events[0].inputs[0].depth = 8;
    nets::Network net(multistage(3, 3));
    const auto report = verify_against_network(g, net);
    ASSERT_EQ(report.mismatches.size(), 1u);
    EXPECT_EQ(report.mismatches[0], "F1 input 1: depth 8 in graph, 7 in network");
}

TEST(VerifyAgainstNetwork, LeavesNetworkStateUntouched) {
    nets::Network net(multistage(2, 1));
    const auto before = net.flat_state();
    verify_against_network(enumerate_fusions(2, 1), net);
    EXPECT_EQ(net.flat_state(), before);
    EXPECT_EQ(net.mode(), tensor::Mode::training);
}

TEST(VerifyAgainstNetwork, RejectsOtherStrategies) {
    auto cfg = multistage(2, 1);
    cfg.strategy = nets::Strategy::late;
    nets::Network net(cfg);
    EXPECT_THROW(verify_against_network(enumerate_fusions(2, 1), net), ConfigError);
}

TEST(GraphJson, RoundTrip) {
    const auto g = enumerate_fusions(2, 2);
    const auto j = to_json(g);
    EXPECT_EQ(j.at("events").size(), 7u);
    EXPECT_EQ(j.at("events")[0].at("op"), "multiply");
    EXPECT_EQ(j.at("events")[0].at("inputs")[0].at("src"), -1);
    EXPECT_EQ(j.at("events")[0].at("inputs")[0].at("depth"), 5);
    EXPECT_EQ(graph_from_json(j), g);
}

TEST(GraphJson, RejectsMalformedGraphs) {
    auto j = to_json(enumerate_fusions(1, 1));
    j["events"][0]["inputs"].erase(1);
    EXPECT_THROW(graph_from_json(j), ConfigError);
    EXPECT_THROW(graph_from_json(nlohmann::json::object()), ConfigError);
}

} // namespace
} // namespace mfn::fusiongraph
