// SPDX-License-Identifier: Apache-2.0
//
// The cell search space: ten candidate operations, the 14-edge cell DAG,
// architecture logits and their discretization into a Genotype.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace heartdarts {

/// Candidate operations. The order is fixed; it defines the alpha columns.
enum class OpKind : std::uint8_t {
    conv3 = 0,
    conv5,
    conv9,
    conv13,
    conv17,
    conv27,
    maxpool3,
    maxpool5,
    skip_connect,
    zero,
};

inline constexpr std::size_t kNumOps = 10;
inline constexpr std::size_t kIntermediateNodes = 4;
inline constexpr std::size_t kInputNodes = 2;
inline constexpr std::size_t kNumEdges = 14;  // 2 + 3 + 4 + 5

inline constexpr std::array<OpKind, kNumOps> kAllOps = {
    OpKind::conv3,  OpKind::conv5,    OpKind::conv9,    OpKind::conv13,       OpKind::conv17,
    OpKind::conv27, OpKind::maxpool3, OpKind::maxpool5, OpKind::skip_connect, OpKind::zero,
};

std::string_view op_name(OpKind op);
std::optional<OpKind> op_from_name(std::string_view name);

bool is_conv(OpKind op);
bool is_pool(OpKind op);
/// Kernel (conv) or window (pool) size; 1 for skip_connect and zero.
std::size_t op_kernel_size(OpKind op);

// Cell topology. Nodes 0 and 1 are the inputs, nodes 2..5 the intermediate
// nodes. Edges into node j (j >= 2) come from every node i < j.

/// Flat index of the edge (pred -> node); node in [2, 6), pred < node.
std::size_t edge_index(std::size_t node, std::size_t pred);
/// Inverse of edge_index: (node, pred).
std::pair<std::size_t, std::size_t> edge_endpoints(std::size_t edge);

using AlphaRow = std::array<double, kNumOps>;
using AlphaMatrix = std::array<AlphaRow, kNumEdges>;

/// alpha = (alpha_normal, alpha_reduce).
struct ArchParams {
    AlphaMatrix normal{};
    AlphaMatrix reduce{};
    bool operator==(const ArchParams&) const = default;
};

/// Softmax of one alpha row: the mixing weights of one edge.
AlphaRow mixing_weights(const AlphaRow& alpha_row);

struct GenotypeEdge {
    std::size_t pred = 0;
    OpKind op = OpKind::conv3;
    bool operator==(const GenotypeEdge&) const = default;
};

using NodeEdges = std::array<GenotypeEdge, 2>;
using CellGenotype = std::array<NodeEdges, kIntermediateNodes>;

struct Genotype {
    CellGenotype normal{};
    CellGenotype reduce{};
    std::array<std::size_t, kIntermediateNodes> concat{2, 3, 4, 5};

    bool operator==(const Genotype&) const = default;
};

/// Throws ValidationError naming the offending node when a genotype breaks
/// an invariant (distinct predecessors, DAG order, no zero op).
void validate(const Genotype& g);

/// Per edge the best non-zero op by softmax weight; per node the two edges
/// with the strongest best-op weight. Ties: lower op index, then lower
/// predecessor index. Selected pairs are listed by ascending predecessor.
CellGenotype discretize_cell(const AlphaMatrix& alpha);
Genotype discretize(const ArchParams& arch);

std::string serialize_genotype(const Genotype& g);
/// Throws ParseError (malformed text, unknown op) or ValidationError.
Genotype parse_genotype(std::string_view text);

}  // namespace heartdarts
