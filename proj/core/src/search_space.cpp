// SPDX-License-Identifier: Apache-2.0
#include "heartdarts/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "heartdarts/error.hpp"

namespace heartdarts {

namespace {

constexpr std::array<std::string_view, kNumOps> kOpNames = {
    "conv3", "conv5", "conv9", "conv13", "conv17", "conv27", "maxpool3", "maxpool5", "skip_connect", "zero",
};

constexpr std::array<std::size_t, kIntermediateNodes> kEdgeOffset = {0, 2, 5, 9};

constexpr int kGenotypeFormatVersion = 1;

}  // namespace

std::string_view op_name(OpKind op) { return kOpNames.at(static_cast<std::size_t>(op)); }

std::optional<OpKind> op_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kNumOps; ++i)
        if (kOpNames[i] == name) return static_cast<OpKind>(i);
    return std::nullopt;
}

bool is_conv(OpKind op) { return op <= OpKind::conv27; }
bool is_pool(OpKind op) { return op == OpKind::maxpool3 || op == OpKind::maxpool5; }

std::size_t op_kernel_size(OpKind op) {
    switch (op) {
        case OpKind::conv3: return 3;
        case OpKind::conv5: return 5;
        case OpKind::conv9: return 9;
        case OpKind::conv13: return 13;
        case OpKind::conv17: return 17;
        case OpKind::conv27: return 27;
        case OpKind::maxpool3: return 3;
        case OpKind::maxpool5: return 5;
        case OpKind::skip_connect:
        case OpKind::zero: return 1;
    }
    return 1;
}

std::size_t edge_index(std::size_t node, std::size_t pred) {
    if (node < kInputNodes || node >= kInputNodes + kIntermediateNodes || pred >= node)
        throw ValidationError("no edge " + std::to_string(pred) + " -> " + std::to_string(node));
    return kEdgeOffset[node - kInputNodes] + pred;
}

std::pair<std::size_t, std::size_t> edge_endpoints(std::size_t edge) {
    if (edge >= kNumEdges) throw ValidationError("edge index " + std::to_string(edge) + " out of range");
    std::size_t k = kIntermediateNodes - 1;
    while (kEdgeOffset[k] > edge) --k;
    return {k + kInputNodes, edge - kEdgeOffset[k]};
}

AlphaRow mixing_weights(const AlphaRow& alpha_row) {
    AlphaRow w{};
    const double m = *std::max_element(alpha_row.begin(), alpha_row.end());
    double denom = 0.0;
    for (std::size_t i = 0; i < kNumOps; ++i) {
        w[i] = std::exp(alpha_row[i] - m);
        denom += w[i];
    }
    for (double& v : w) v /= denom;
    return w;
}

void validate(const Genotype& g) {
    auto check_cell = [](const CellGenotype& cell, std::string_view which) {
        for (std::size_t k = 0; k < kIntermediateNodes; ++k) {
            const std::size_t node = k + kInputNodes;
            const auto& pairs = cell[k];
            for (const auto& e : pairs) {
                if (e.pred >= node)
                    throw ValidationError(std::string(which) + " node " + std::to_string(node) + ": predecessor " +
                                          std::to_string(e.pred) + " breaks DAG order");
                if (e.op == OpKind::zero)
                    throw ValidationError(std::string(which) + " node " + std::to_string(node) + ": zero op selected");
                if (static_cast<std::size_t>(e.op) >= kNumOps)
                    throw ValidationError(std::string(which) + " node " + std::to_string(node) + ": invalid op");
            }
            if (pairs[0].pred == pairs[1].pred)
                throw ValidationError(std::string(which) + " node " + std::to_string(node) +
                                      ": duplicate predecessor " + std::to_string(pairs[0].pred));
        }
    };
    check_cell(g.normal, "normal");
    check_cell(g.reduce, "reduce");
    for (std::size_t k = 0; k < kIntermediateNodes; ++k)
        if (g.concat[k] != k + kInputNodes) throw ValidationError("concat must list the intermediate nodes 2..5");
}

CellGenotype discretize_cell(const AlphaMatrix& alpha) {
    CellGenotype cell{};
    for (std::size_t k = 0; k < kIntermediateNodes; ++k) {
        const std::size_t node = k + kInputNodes;
        struct Candidate {
            double weight;
            std::size_t op;
            std::size_t pred;
        };
        std::vector<Candidate> cands;
        for (std::size_t pred = 0; pred < node; ++pred) {
            const AlphaRow w = mixing_weights(alpha[edge_index(node, pred)]);
            std::size_t best = 0;
            for (std::size_t o = 1; o < kNumOps; ++o) {
                if (static_cast<OpKind>(o) == OpKind::zero) continue;
                if (w[o] > w[best]) best = o;
            }
            cands.push_back({w[best], best, pred});
        }
        std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
            if (a.weight != b.weight) return a.weight > b.weight;
            if (a.op != b.op) return a.op < b.op;
            return a.pred < b.pred;
        });
        std::array<Candidate, 2> top = {cands[0], cands[1]};
        if (top[0].pred > top[1].pred) std::swap(top[0], top[1]);
        for (std::size_t i = 0; i < 2; ++i) cell[k][i] = {top[i].pred, static_cast<OpKind>(top[i].op)};
    }
    return cell;
}

Genotype discretize(const ArchParams& arch) {
    Genotype g;
    g.normal = discretize_cell(arch.normal);
    g.reduce = discretize_cell(arch.reduce);
    return g;
}

std::string serialize_genotype(const Genotype& g) {
    auto cell_json = [](const CellGenotype& cell) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& pairs : cell) {
            nlohmann::json node = nlohmann::json::array();
            for (const auto& e : pairs) node.push_back({e.pred, std::string(op_name(e.op))});
            nodes.push_back(std::move(node));
        }
        return nodes;
    };
    nlohmann::ordered_json j;
    j["normal"] = cell_json(g.normal);
    j["reduce"] = cell_json(g.reduce);
    j["concat"] = g.concat;
    j["format_version"] = kGenotypeFormatVersion;
    return j.dump() + "\n";
}

Genotype parse_genotype(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("genotype: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("genotype: top level must be an object");
    for (const char* key : {"normal", "reduce", "concat", "format_version"})
        if (!j.contains(key)) throw ParseError(std::string("genotype: missing field \"") + key + "\"");
    if (!j["format_version"].is_number_integer() || j["format_version"].get<int>() != kGenotypeFormatVersion)
        throw ParseError("genotype: unsupported format_version " + j["format_version"].dump());

    auto parse_cell = [](const nlohmann::json& nodes, const std::string& which) {
        if (!nodes.is_array() || nodes.size() != kIntermediateNodes)
            throw ParseError("genotype: \"" + which + "\" must list " + std::to_string(kIntermediateNodes) + " nodes");
        CellGenotype cell{};
        for (std::size_t k = 0; k < kIntermediateNodes; ++k) {
            const auto& node = nodes[k];
            const std::string where = which + "[" + std::to_string(k) + "]";
            if (!node.is_array() || node.size() != 2)
                throw ParseError("genotype: " + where + " must hold exactly 2 [pred, op] pairs");
            for (std::size_t i = 0; i < 2; ++i) {
                const auto& pair = node[i];
                const std::string at = where + "[" + std::to_string(i) + "]";
                if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() || !pair[1].is_string())
                    throw ParseError("genotype: " + at + " must be [integer, \"op\"]");
                const auto pred = pair[0].get<long long>();
                if (pred < 0) throw ParseError("genotype: " + at + " has negative predecessor");
                const auto name = pair[1].get<std::string>();
                const auto op = op_from_name(name);
                if (!op) throw ParseError("genotype: " + at + " unknown op \"" + name + "\"");
                cell[k][i] = {static_cast<std::size_t>(pred), *op};
            }
        }
        return cell;
    };

    Genotype g;
    g.normal = parse_cell(j["normal"], "normal");
    g.reduce = parse_cell(j["reduce"], "reduce");
    const auto& concat = j["concat"];
    if (!concat.is_array() || concat.size() != kIntermediateNodes)
        throw ParseError("genotype: \"concat\" must list 4 node indices");
    for (std::size_t k = 0; k < kIntermediateNodes; ++k) {
        if (!concat[k].is_number_integer()) throw ParseError("genotype: concat[" + std::to_string(k) + "] not an integer");
        g.concat[k] = concat[k].get<std::size_t>();
    }
    validate(g);
    return g;
}

}  // namespace heartdarts
