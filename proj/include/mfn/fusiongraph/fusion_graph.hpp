// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "mfn/nets/network.hpp"

namespace mfn::fusiongraph {

using nets::FusionOp;

/// Input nodes use the event indices -1 (x1, CT) and 0 (x2, PET).
inline constexpr int ct_input = -1;
inline constexpr int pet_input = 0;

struct EventInput {
    int source = 0;
    int depth = 0; // trainable layers applied since `source`
    bool operator==(const EventInput&) const = default;
};

struct FusionEvent {
    int index = 0;
    FusionOp op = FusionOp::add;
    std::vector<EventInput> inputs;
    bool operator==(const FusionEvent&) const = default;
};

struct FusionGraph {
    int stages = 0;
    int blocks_per_stage = 0;
    std::vector<FusionEvent> events;

    int terminal() const { return events.empty() ? 0 : events.back().index; }

    /// Throws ConfigError if indices are not increasing, a source does not precede
    /// its event, a depth is negative, a multiply does not have two inputs, or the
    /// graph does not end in exactly one concat.
    void validate() const;

    bool operator==(const FusionGraph&) const = default;
};

std::string_view to_string(FusionOp op);

FusionGraph enumerate_fusions(int stages, int blocks_per_stage);

struct VerificationReport {
    bool match = false;
    int expected_events = 0;
    int observed_events = 0;
    std::vector<std::string> mismatches;
};

/// Traces one forward pass of `net` and compares its fusion events with `g`.
/// The network's mode and batch-norm statistics are left untouched.
VerificationReport verify_against_network(const FusionGraph& g, nets::Network& net);

/// Events of an instrumented forward pass of a multistage network.
FusionGraph trace_network(nets::Network& net);

nlohmann::json to_json(const FusionGraph& g);
FusionGraph graph_from_json(const nlohmann::json& j);

} // namespace mfn::fusiongraph
