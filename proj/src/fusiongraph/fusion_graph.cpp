// SPDX-License-Identifier: Apache-2.0
#include "mfn/fusiongraph/fusion_graph.hpp"

#include <algorithm>

#include "mfn/common/errors.hpp"

namespace mfn::fusiongraph {

namespace {

std::string event_name(int index) {
    if (index == ct_input) return "x1";
    if (index == pet_input) return "x2";
    return "F" + std::to_string(index);
}

std::string describe(const EventInput& in) {
    return event_name(in.source) + "^" + std::to_string(in.depth);
}

FusionOp parse_op(const std::string& s) {
    if (s == "multiply") return FusionOp::multiply;
    if (s == "add") return FusionOp::add;
    if (s == "concat") return FusionOp::concat;
    throw ConfigError("unknown fusion operator '" + s + "'");
}

} // namespace

std::string_view to_string(FusionOp op) {
    switch (op) {
        case FusionOp::multiply: return "multiply";
        case FusionOp::add: return "add";
        case FusionOp::concat: return "concat";
    }
    return "unknown";
}

void FusionGraph::validate() const {
    if (events.empty()) throw ConfigError("fusion graph has no events");
    int previous = 0;
    int concats = 0;
    for (const auto& e : events) {
        if (e.index <= previous) throw ConfigError("event indices must increase, saw " + event_name(e.index));
        previous = e.index;
        if (e.op == FusionOp::multiply && e.inputs.size() != 2) {
            throw ConfigError(event_name(e.index) + ": multiply needs exactly two inputs");
        }
        if (e.inputs.empty()) throw ConfigError(event_name(e.index) + " has no inputs");
        for (const auto& in : e.inputs) {
            if (in.depth < 0) throw ConfigError(event_name(e.index) + ": negative depth");
            if (in.source < ct_input || in.source >= e.index) {
                throw ConfigError(event_name(e.index) + ": input " + event_name(in.source) + " does not precede it");
            }
        }
        if (e.op == FusionOp::concat) ++concats;
    }
    if (concats != 1 || events.back().op != FusionOp::concat) {
        throw ConfigError("fusion graph must end in exactly one concat event");
    }
}

FusionGraph enumerate_fusions(int stages, int blocks_per_stage) {
    if (stages < 1 || stages > 5) throw ConfigError("L must lie in [1, 5], got " + std::to_string(stages));
    if (blocks_per_stage < 1 || blocks_per_stage > 5) {
        throw ConfigError("N must lie in [1, 5], got " + std::to_string(blocks_per_stage));
    }
    FusionGraph g{stages, blocks_per_stage, {}};
    const int branch_depth = 2 * blocks_per_stage;
    for (int i = 0; i < stages; ++i) {
        const int ct = 3 * i - 1;
        const int pet = 3 * i;
        const int product = 3 * i + 1;
        g.events.push_back({product, FusionOp::multiply, {{ct, branch_depth + 1}, {pet, branch_depth + 1}}});
        g.events.push_back({3 * i + 2, FusionOp::add, {{ct, branch_depth}, {product, 0}}});
        g.events.push_back({3 * i + 3, FusionOp::add, {{pet, branch_depth}, {product, 0}}});
    }
    g.events.push_back({3 * stages + 1, FusionOp::concat, {{3 * stages - 1, 0}, {3 * stages, 0}}});
    return g;
}

FusionGraph trace_network(nets::Network& net) {
    const auto& cfg = net.config();
    if (cfg.strategy != nets::Strategy::multistage) {
        throw ConfigError("fusion graph verification needs a multistage network, got " +
                          std::string(nets::to_string(cfg.strategy)));
    }
    // The smallest input every stage can halve; inference mode keeps running statistics intact.
    const std::int64_t side = std::int64_t{1} << cfg.stages;
    const tensor::Shape shape{1, 1, side, side, side};
    nets::FusionRecorder recorder;
    nets::ForwardProbe probe;
    probe.fusion_recorder = &recorder;
    const auto previous_mode = net.mode();
    net.set_mode(tensor::Mode::inference);
    {
        tensor::NoGradGuard no_grad;
        net.forward({tensor::Tensor::zeros(shape), tensor::Tensor::zeros(shape)}, &probe);
    }
    net.set_mode(previous_mode);

    FusionGraph g{cfg.stages, cfg.blocks_per_stage, {}};
    for (const auto& e : recorder.events) {
        FusionEvent event{e.index, e.op, {}};
        for (const auto& in : e.inputs) event.inputs.push_back({in.source, in.depth});
        g.events.push_back(std::move(event));
    }
    return g;
}

VerificationReport verify_against_network(const FusionGraph& g, nets::Network& net) {
    const FusionGraph observed = trace_network(net);
    VerificationReport report;
    report.expected_events = static_cast<int>(g.events.size());
    report.observed_events = static_cast<int>(observed.events.size());
    auto& out = report.mismatches;
    if (report.expected_events != report.observed_events) {
        out.push_back("event count: graph has " + std::to_string(report.expected_events) + ", network has " +
                      std::to_string(report.observed_events));
    }
    const std::size_t common = std::min(g.events.size(), observed.events.size());
    for (std::size_t k = 0; k < common; ++k) {
        const auto& want = g.events[k];
        const auto& got = observed.events[k];
        const std::string name = event_name(want.index);
        if (want.index != got.index) {
            out.push_back(name + ": network records index " + std::to_string(got.index));
        }
        if (want.op != got.op) {
            out.push_back(name + ": operator " + std::string(to_string(want.op)) + " in graph, " +
                          std::string(to_string(got.op)) + " in network");
        }
        if (want.inputs.size() != got.inputs.size()) {
            out.push_back(name + ": " + std::to_string(want.inputs.size()) + " inputs in graph, " +
                          std::to_string(got.inputs.size()) + " in network");
            continue;
        }
        for (std::size_t i = 0; i < want.inputs.size(); ++i) {
            const auto& a = want.inputs[i];
            const auto& b = got.inputs[i];
            if (a.source != b.source) {
                out.push_back(name + " input " + std::to_string(i + 1) + ": source " + event_name(a.source) +
                              " in graph, " + event_name(b.source) + " in network");
            }
            if (a.depth != b.depth) {
                out.push_back(name + " input " + std::to_string(i + 1) + ": depth " + std::to_string(a.depth) +
                              " in graph, " + std::to_string(b.depth) + " in network");
            }
        }
    }
    for (std::size_t k = common; k < g.events.size(); ++k) {
        const auto& e = g.events[k];
        std::string inputs;
        for (const auto& in : e.inputs) inputs += (inputs.empty() ? "" : ", ") + describe(in);
        out.push_back(event_name(e.index) + " = " + std::string(to_string(e.op)) + "(" + inputs +
                      ") missing from network");
    }
    for (std::size_t k = common; k < observed.events.size(); ++k) {
        out.push_back(event_name(observed.events[k].index) + " (" + std::string(to_string(observed.events[k].op)) +
                      ") present in network but not in graph");
    }
    report.match = out.empty();
    return report;
}

nlohmann::json to_json(const FusionGraph& g) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : g.events) {
        nlohmann::json inputs = nlohmann::json::array();
        for (const auto& in : e.inputs) inputs.push_back({{"src", in.source}, {"depth", in.depth}});
        events.push_back({{"j", e.index}, {"op", to_string(e.op)}, {"inputs", std::move(inputs)}});
    }
    return {{"stages", g.stages}, {"blocks_per_stage", g.blocks_per_stage}, {"terminal", g.terminal()},
            {"events", std::move(events)}};
}

FusionGraph graph_from_json(const nlohmann::json& j) {
    try {
        FusionGraph g;
        g.stages = j.at("stages").get<int>();
        g.blocks_per_stage = j.at("blocks_per_stage").get<int>();
        for (const auto& e : j.at("events")) {
            FusionEvent event{e.at("j").get<int>(), parse_op(e.at("op").get<std::string>()), {}};
            for (const auto& in : e.at("inputs")) {
                event.inputs.push_back({in.at("src").get<int>(), in.at("depth").get<int>()});
            }
            g.events.push_back(std::move(event));
        }
        g.validate();
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed fusion graph: ") + e.what());
    }
}

} // namespace mfn::fusiongraph
