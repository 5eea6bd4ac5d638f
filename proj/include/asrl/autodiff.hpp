#pragma once

#include <unordered_map>

#include "asrl/graph.hpp"

namespace asrl {

// Maps a node id to the id of its adjoint node. Nodes that the root does not
// depend on, or that only connect through zero-derivative ops (step, sign,
// in_range_mask), have no entry; use grad_or_zero for those.
using GradientMap = std::unordered_map<NodeId, NodeId>;

// Reverse pass from a scalar root. Appends the adjoint computation to the same
// graph as ordinary nodes, so the result can itself be differentiated by
// calling backward again on a scalar derived from it.
GradientMap backward(Graph& g, NodeId root);

// Adjoint of x, or throws ShapeError if x has none.
NodeId grad_of(const GradientMap& m, NodeId x);

// Adjoint of x, or a fresh zero leaf shaped like x.
NodeId grad_or_zero(Graph& g, const GradientMap& m, NodeId x);

// Appends mean_b (||d/d input of sum_b critic_output||_2 - 1)^2 to the graph
// and returns the penalty node. critic_output must be one value per batch row
// (shape [b] or [b,1]) and input_node must be one of its ancestors. The inner
// gradient is obtained by a first reverse pass recorded on the same graph, so
// the penalty node stays differentiable.
NodeId grad_norm_penalty(Graph& g, NodeId critic_output, NodeId input_node);

// Second reverse pass over the penalty; entries give d penalty / d node for
// parameter leaves.
GradientMap grad_norm_penalty_backward(Graph& g, NodeId critic_output, NodeId input_node);

}  // namespace asrl
