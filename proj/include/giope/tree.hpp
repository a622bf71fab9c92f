#pragma once
#include <algorithm>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "giope/data.hpp"
#include "giope/errors.hpp"
#include "giope/format.hpp"
#include "giope/loss.hpp"

namespace giope {

/// Binary axis-aligned node. Routing rule: x[feature] <= threshold goes left.
struct Node {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int leaf_id = -1;
    std::unique_ptr<Node> left, right;

    bool is_leaf() const { return feature < 0; }
};

/// Accepted split, for the fit report. `node` is the root-to-node path as a
/// string of L/R characters ("" is the root); losses are node-local
/// per-record values.
struct SplitEvent {
    std::string node;
    std::size_t n = 0;
    int feature = -1;
    double threshold = 0.0;
    double loss_before = 0.0;
    double loss_after = 0.0;
};

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double loss_after = 0.0;
};

class Tree {
public:
    Tree() : root_(std::make_unique<Node>()), m_(0) { relabel(); }
    Tree(std::unique_ptr<Node> root, std::size_t m) : root_(std::move(root)), m_(m) {
        relabel();
    }

    const Node& root() const { return *root_; }
    std::size_t m() const { return m_; }
    int leaf_count() const { return leaf_count_; }

    /// Leaf id for a feature vector. Leaf ids run 0..leaf_count-1 left to
    /// right.
    int assign_leaf(std::span<const double> x) const {
        if (x.size() < m_)
            throw DimensionMismatch("assign_leaf: vector has " + std::to_string(x.size()) +
                                    " features, tree needs " + std::to_string(m_));
        const Node* node = root_.get();
        while (!node->is_leaf())
            node = x[static_cast<std::size_t>(node->feature)] <= node->threshold
                       ? node->left.get()
                       : node->right.get();
        return node->leaf_id;
    }

    /// Human-readable conjunction of the split conditions on each leaf's
    /// root-to-leaf path ("true" for the root-only tree).
    std::vector<std::string> leaf_rules() const {
        std::vector<std::string> rules;
        std::vector<std::string> conds;
        walk_rules(*root_, conds, rules);
        return rules;
    }

private:
    void relabel() {
        leaf_count_ = 0;
        label(*root_);
    }
    void label(Node& node) {
        if (node.is_leaf()) {
            node.leaf_id = leaf_count_++;
            return;
        }
        label(*node.left);
        label(*node.right);
    }
    static void walk_rules(const Node& node, std::vector<std::string>& conds,
                           std::vector<std::string>& rules) {
        if (node.is_leaf()) {
            if (conds.empty()) {
                rules.push_back("true");
                return;
            }
            std::string rule = conds.front();
            for (std::size_t i = 1; i < conds.size(); ++i) rule += " AND " + conds[i];
            rules.push_back(std::move(rule));
            return;
        }
        const std::string base = "x" + std::to_string(node.feature);
        conds.push_back(base + " <= " + format_double(node.threshold));
        walk_rules(*node.left, conds, rules);
        conds.back() = base + " > " + format_double(node.threshold);
        walk_rules(*node.right, conds, rules);
        conds.pop_back();
    }

    std::unique_ptr<Node> root_;
    std::size_t m_ = 0;
    int leaf_count_ = 0;
};

namespace detail {

struct NodeColumns {
    std::vector<double> value, rho, d;
};

// Candidate split of one node: scan features in index order, thresholds
// ascending, keep the first strict minimum.
inline std::optional<SplitChoice> best_split_indexed(std::span<const EvalRecord> all,
                                                     std::span<const std::size_t> idx,
                                                     const LossConfig& cfg, double g_inf,
                                                     double* unsplit_out = nullptr) {
    const std::size_t n = idx.size();
    if (n == 0) return std::nullopt;
    const std::size_t m = all[idx[0]].x.size();

    NodeColumns cols;
    cols.rho.resize(n);
    cols.d.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto& r = all[idx[j]];
        cols.rho[j] = r.rho;
        cols.d[j] = r.rho * r.g - r.g;
    }
    const LeafTerm unsplit = leaf_term(cols.rho, cols.d, cfg, g_inf, /*with_reg=*/true);
    if (!unsplit.admissible) return std::nullopt;
    if (unsplit_out) *unsplit_out = unsplit.value;

    std::optional<SplitChoice> best;
    std::vector<std::size_t> order(n);
    cols.value.resize(n);

    for (std::size_t f = 0; f < m; ++f) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double va = all[idx[a]].x[f], vb = all[idx[b]].x[f];
            return va != vb ? va < vb : idx[a] < idx[b];
        });
        std::vector<double> rho(n), d(n);
        for (std::size_t j = 0; j < n; ++j) {
            cols.value[j] = all[idx[order[j]]].x[f];
            rho[j] = cols.rho[order[j]];
            d[j] = cols.d[order[j]];
        }

        // Boundaries between distinct values; midpoint thresholds.
        std::vector<std::size_t> bounds;
        for (std::size_t k = 1; k < n; ++k)
            if (cols.value[k - 1] < cols.value[k]) bounds.push_back(k);
        if (bounds.empty()) continue;

        // Cap candidates per feature, evenly by rank.
        std::vector<std::size_t> picked;
        if (bounds.size() <= cfg.max_thresholds || cfg.max_thresholds == 0) {
            picked = bounds;
        } else if (cfg.max_thresholds == 1) {
            picked.push_back(bounds[0]);
        } else {
            picked.reserve(cfg.max_thresholds);
            for (std::size_t j = 0; j < cfg.max_thresholds; ++j)
                picked.push_back(
                    bounds[j * (bounds.size() - 1) / (cfg.max_thresholds - 1)]);
        }

        for (std::size_t k : picked) {
            if (k < cfg.min_leaf || n - k < cfg.min_leaf) continue;
            const std::span<const double> rho_l(rho.data(), k), rho_r(rho.data() + k, n - k);
            const std::span<const double> d_l(d.data(), k), d_r(d.data() + k, n - k);
            // A child with zero importance mass is never acceptable, whatever
            // the variance mode.
            if (!(sum_sq(rho_l) > 0.0) || !(sum_sq(rho_r) > 0.0)) continue;
            const LeafTerm lt = leaf_term(rho_l, d_l, cfg, g_inf, true);
            const LeafTerm rt = leaf_term(rho_r, d_r, cfg, g_inf, true);
            if (!lt.admissible || !rt.admissible) continue;

            const double lo = cols.value[k - 1], hi = cols.value[k];
            double thr = lo + (hi - lo) / 2.0;
            if (!(thr >= lo && thr < hi)) thr = lo; // rounding guard on tiny gaps
            const double loss = (static_cast<double>(k) * lt.value +
                                 static_cast<double>(n - k) * rt.value) /
                                static_cast<double>(n);
            if (!best || loss < best->loss_after)
                best = SplitChoice{static_cast<int>(f), thr, loss};
        }
    }

    if (best && best->loss_after < unsplit.value - cfg.tol) return best;
    return std::nullopt;
}

} // namespace detail

/// Best admissible split of a record set, or nullopt when no candidate
/// improves the unsplit loss by more than cfg.tol.
inline std::optional<SplitChoice> best_split(std::span<const EvalRecord> records,
                                             const LossConfig& cfg, double g_inf) {
    std::vector<std::size_t> idx(records.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return detail::best_split_indexed(records, idx, cfg, g_inf);
}

/// Greedy recursive partitioning: split depth-first (left child first) until
/// no split improves the loss or max_depth is reached.
inline Tree build_tree(const Dataset& ds, const LossConfig& cfg,
                       std::optional<double> g_inf_override = {},
                       std::vector<SplitEvent>* report = nullptr) {
    if (ds.empty()) throw InadmissibleRoot("build_tree: empty dataset");
    const double g_inf = g_inf_override.value_or(ds.g_inf());
    const auto& all = ds.records();

    {
        std::vector<double> rho(all.size()), d(all.size());
        for (std::size_t i = 0; i < all.size(); ++i) {
            rho[i] = all[i].rho;
            d[i] = all[i].rho * all[i].g - all[i].g;
        }
        if (!(detail::sum_sq(rho) > 0.0))
            throw InadmissibleRoot("build_tree: all importance ratios are zero");
        const auto t = detail::leaf_term(rho, d, cfg, g_inf, true);
        if (!t.admissible) throw InadmissibleRoot(std::string("build_tree: ") + t.why);
    }

    struct Builder {
        std::span<const EvalRecord> all;
        const LossConfig& cfg;
        double g_inf;
        std::vector<SplitEvent>* report;

        std::unique_ptr<Node> grow(std::vector<std::size_t> idx, std::size_t depth,
                                    const std::string& path) {
            auto node = std::make_unique<Node>();
            if (cfg.max_depth && depth >= *cfg.max_depth) return node;
            double unsplit = 0.0;
            const auto choice =
                detail::best_split_indexed(all, idx, cfg, g_inf, &unsplit);
            if (!choice) return node;

            if (report)
                report->push_back(SplitEvent{path, idx.size(), choice->feature,
                                             choice->threshold, unsplit,
                                             choice->loss_after});
            std::vector<std::size_t> left_idx, right_idx;
            for (std::size_t i : idx) {
                if (all[i].x[static_cast<std::size_t>(choice->feature)] <= choice->threshold)
                    left_idx.push_back(i);
                else
                    right_idx.push_back(i);
            }
            idx.clear();
            idx.shrink_to_fit();
            node->feature = choice->feature;
            node->threshold = choice->threshold;
            node->left = grow(std::move(left_idx), depth + 1, path + "L");
            node->right = grow(std::move(right_idx), depth + 1, path + "R");
            return node;
        }
    };

    Builder builder{all, cfg, g_inf, report};
    std::vector<std::size_t> idx(all.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto root = builder.grow(std::move(idx), 0, "");
    return Tree(std::move(root), ds.m());
}

namespace detail {

inline nlohmann::json node_to_json(const Node& node) {
    if (node.is_leaf()) return nlohmann::json{{"leaf", node.leaf_id}};
    return nlohmann::json{{"feature", node.feature},
                          {"threshold", node.threshold},
                          {"left", node_to_json(*node.left)},
                          {"right", node_to_json(*node.right)}};
}

inline std::unique_ptr<Node> node_from_json(const nlohmann::json& j, int& max_feature,
                                            std::vector<int>& serial_leaf_ids) {
    if (!j.is_object()) throw SchemaError("tree: node must be a JSON object");
    auto node = std::make_unique<Node>();
    if (j.contains("leaf")) {
        if (!j["leaf"].is_number_integer())
            throw SchemaError("tree: 'leaf' must be an integer");
        serial_leaf_ids.push_back(j["leaf"].get<int>());
        return node;
    }
    for (const char* key : {"feature", "threshold", "left", "right"})
        if (!j.contains(key))
            throw SchemaError("tree: internal node missing field '" + std::string(key) + "'");
    if (!j["feature"].is_number_integer() || j["feature"].get<int>() < 0)
        throw SchemaError("tree: 'feature' must be a nonnegative integer");
    if (!j["threshold"].is_number())
        throw SchemaError("tree: 'threshold' must be a number");
    node->feature = j["feature"].get<int>();
    node->threshold = j["threshold"].get<double>();
    max_feature = std::max(max_feature, node->feature);
    node->left = node_from_json(j["left"], max_feature, serial_leaf_ids);
    node->right = node_from_json(j["right"], max_feature, serial_leaf_ids);
    return node;
}

} // namespace detail

inline std::string tree_to_json(const Tree& tree) {
    return detail::node_to_json(tree.root()).dump(2) + "\n";
}

/// Parse a tree. Leaf ids are re-derived from the structure and must match
/// the serialized ones. The feature count is inferred as max feature + 1.
inline Tree tree_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("tree: ") + e.what());
    }
    int max_feature = -1;
    std::vector<int> serial_ids;
    auto root = detail::node_from_json(j, max_feature, serial_ids);
    Tree tree(std::move(root), static_cast<std::size_t>(max_feature + 1));
    for (std::size_t i = 0; i < serial_ids.size(); ++i)
        if (serial_ids[i] != static_cast<int>(i))
            throw SchemaError("tree: leaf ids do not match left-to-right order (found " +
                              std::to_string(serial_ids[i]) + " at position " +
                              std::to_string(i) + ")");
    return tree;
}

} // namespace giope
