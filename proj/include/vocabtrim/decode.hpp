#pragma once

#include "vocabtrim/common.hpp"
#include "vocabtrim/linear_head.hpp"
#include "vocabtrim/lm.hpp"

#include <algorithm>
#include <optional>
#include <span>
#include <vector>

namespace vocabtrim {

struct TreeConfig {
    std::int32_t depth = 3;
    std::int32_t node_top_k = 8;
    std::int32_t max_tokens = 32;

    void validate() const {
        if (depth < 1 || node_top_k < 1 || max_tokens < 1) {
            throw config_error("tree config fields must be >= 1");
        }
        if (max_tokens < depth) {
            throw config_error("tree max_tokens must be >= depth so a root-to-leaf path fits");
        }
    }
};

// Speculated token tree. Tokens are stored in TARGET id space; scores
// are cumulative draft log-probabilities along the path.
struct DraftTree {
    static constexpr std::int32_t k_root = -1;

    struct Node {
        TokenId token;
        std::int32_t parent; // node index, or k_root
        std::int32_t depth;  // root children have depth 1
        double score;
    };

    std::vector<Node> nodes;
};

struct DecodeStats {
    std::int32_t blocks = 0;          // target verification passes
    std::int64_t produced = 0;        // emitted tokens, accepted + bonus
    std::vector<std::int32_t> accepted_per_block;
    std::int32_t draft_passes_per_block = 0; // = tree depth
};

struct VerifyResult {
    std::vector<TokenId> accepted;
    TokenId bonus;
};

struct GenerationResult {
    std::vector<TokenId> output; // generated tokens only, prompt excluded
    DecodeStats stats;
};

// Level-by-level expansion: each frontier node proposes its node_top_k
// best trimmed tokens; candidates across the whole level are ranked by
// cumulative score (ties -> smaller target token id, then smaller
// parent index) and retained while the global node count stays within
// max_tokens. Retained trimmed indices are mapped to target ids before
// storage, so the tree reads in target space.
inline DraftTree build_draft_tree(const TrimmedHeadModel & draft,
                                  std::span<const TokenId> prefix,
                                  const TreeConfig &       cfg) {
    cfg.validate();
    if (prefix.empty()) {
        throw empty_prefix_error("draft tree needs at least one prompt token");
    }

    DraftTree tree;
    struct Candidate {
        double score;
        TokenId token;
        std::int32_t parent;
    };

    std::vector<std::int32_t> frontier = {DraftTree::k_root};
    std::vector<TokenId> context(prefix.begin(), prefix.end());

    const auto path_to = [&tree, &prefix](std::int32_t node, std::vector<TokenId> & out) {
        out.assign(prefix.begin(), prefix.end());
        const std::size_t base = out.size();
        for (std::int32_t cur = node; cur != DraftTree::k_root; cur = tree.nodes[static_cast<std::size_t>(cur)].parent) {
            out.push_back(tree.nodes[static_cast<std::size_t>(cur)].token);
        }
        std::reverse(out.begin() + static_cast<std::ptrdiff_t>(base), out.end());
    };

    for (std::int32_t level = 1; level <= cfg.depth; ++level) {
        const std::int32_t budget = cfg.max_tokens - static_cast<std::int32_t>(tree.nodes.size());
        if (budget <= 0 || frontier.empty()) {
            break;
        }

        std::vector<Candidate> candidates;
        for (std::int32_t node : frontier) {
            path_to(node, context);
            const double parent_score = node == DraftTree::k_root ? 0.0 : tree.nodes[static_cast<std::size_t>(node)].score;
            const auto scores = log_softmax(draft.trimmed_next_logits(context));

            const auto fanout = std::min<std::int32_t>(cfg.node_top_k, static_cast<std::int32_t>(scores.size()));
            std::vector<std::int32_t> order(scores.size());
            for (std::size_t i = 0; i < order.size(); ++i) {
                order[i] = static_cast<std::int32_t>(i);
            }
            std::partial_sort(order.begin(), order.begin() + fanout, order.end(),
                              [&scores](std::int32_t a, std::int32_t b) {
                                  if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)]) {
                                      return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
                                  }
                                  return a < b; // kept ids ascend with trim index, so this is the target-id tie rule
                              });
            for (std::int32_t i = 0; i < fanout; ++i) {
                const std::int32_t trim_index = order[static_cast<std::size_t>(i)];
                candidates.push_back(Candidate{
                    parent_score + scores[static_cast<std::size_t>(trim_index)],
                    draft.mapping().to_target(trim_index),
                    node,
                });
            }
        }

        std::sort(candidates.begin(), candidates.end(), [](const Candidate & a, const Candidate & b) {
            if (a.score != b.score) {
                return a.score > b.score;
            }
            if (a.token != b.token) {
                return a.token < b.token;
            }
            return a.parent < b.parent;
        });
        const auto retained = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(budget));

        frontier.clear();
        for (std::size_t i = 0; i < retained; ++i) {
            const auto & c = candidates[i];
            frontier.push_back(static_cast<std::int32_t>(tree.nodes.size()));
            tree.nodes.push_back(DraftTree::Node{c.token, c.parent, level, c.score});
        }
    }
    return tree;
}

// Greedy exact-match verification: walk from the root accepting a child
// whenever it carries the target's greedy token for the accepted prefix;
// when no child matches, that greedy token becomes the bonus. The output
// follows the target's greedy distribution exactly.
inline VerifyResult verify_tree_greedy(const LanguageModel & target,
                                       std::span<const TokenId> prefix,
                                       const DraftTree &        tree) {
    VerifyResult result;
    std::vector<TokenId> context(prefix.begin(), prefix.end());
    std::int32_t current = DraftTree::k_root;
    for (;;) {
        const TokenId greedy = greedy_token(target, context);
        std::int32_t next = DraftTree::k_root;
        for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            const auto & node = tree.nodes[i];
            if (node.parent == current && node.token == greedy) {
                next = static_cast<std::int32_t>(i);
                break;
            }
        }
        if (next == DraftTree::k_root) {
            result.bonus = greedy;
            return result;
        }
        result.accepted.push_back(greedy);
        context.push_back(greedy);
        current = next;
    }
}

// Pure target greedy decode; the baseline SpD must reproduce exactly.
inline std::vector<TokenId> greedy_generate(const LanguageModel & target,
                                            std::span<const TokenId> prompt,
                                            std::int64_t max_new, TokenId eos_id) {
    if (prompt.empty()) {
        throw empty_prefix_error("generation needs a non-empty prompt");
    }
    std::vector<TokenId> context(prompt.begin(), prompt.end());
    std::vector<TokenId> out;
    while (static_cast<std::int64_t>(out.size()) < max_new) {
        const TokenId next = greedy_token(target, context);
        out.push_back(next);
        context.push_back(next);
        if (next == eos_id) {
            break;
        }
    }
    return out;
}

// The full speculative loop: draft a tree, verify greedily, emit the
// accepted run plus the bonus token, repeat until EOS or max_new. A
// final block cut short by max_new (or by EOS inside the accepted run)
// has its accepted count reduced to keep produced == sum(accepted + 1).
inline GenerationResult spd_generate(const LanguageModel &    target,
                                     const TrimmedHeadModel & draft,
                                     std::span<const TokenId> prompt,
                                     std::int64_t max_new, const TreeConfig & cfg,
                                     TokenId eos_id) {
    cfg.validate();
    if (prompt.empty()) {
        throw empty_prefix_error("generation needs a non-empty prompt");
    }
    if (max_new < 1) {
        throw config_error("max_new must be >= 1");
    }

    GenerationResult result;
    result.stats.draft_passes_per_block = cfg.depth;
    std::vector<TokenId> context(prompt.begin(), prompt.end());

    while (static_cast<std::int64_t>(result.output.size()) < max_new) {
        const auto tree = build_draft_tree(draft, context, cfg);
        auto [accepted, bonus] = verify_tree_greedy(target, context, tree);

        std::vector<TokenId> emitted = std::move(accepted);
        emitted.push_back(bonus);
        for (std::size_t i = 0; i < emitted.size(); ++i) {
            if (emitted[i] == eos_id) {
                emitted.resize(i + 1);
                break;
            }
        }
        const auto remaining = max_new - static_cast<std::int64_t>(result.output.size());
        if (static_cast<std::int64_t>(emitted.size()) > remaining) {
            emitted.resize(static_cast<std::size_t>(remaining));
        }

        result.stats.blocks += 1;
        result.stats.accepted_per_block.push_back(static_cast<std::int32_t>(emitted.size()) - 1);
        result.output.insert(result.output.end(), emitted.begin(), emitted.end());
        context.insert(context.end(), emitted.begin(), emitted.end());
        if (emitted.back() == eos_id) {
            break;
        }
    }
    result.stats.produced = static_cast<std::int64_t>(result.output.size());
    return result;
}

} // namespace vocabtrim
