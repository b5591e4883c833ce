#pragma once

#include <algorithm>
#include <vector>

#include "kgcrs/embedding.hpp"
#include "kgcrs/graph.hpp"
#include "kgcrs/math.hpp"
#include "kgcrs/types.hpp"

namespace kgcrs {

struct ScoredItem {
  int item;  // item index
  double score;
};

inline Vec role_project(const RoleProj& rp, const Vec& x) {
  Vec out = x;
  axpy(dot(rp.ent_v, x), rp.rel_v, out);
  return out;
}

// Inference-side scoring bundle: propagated entity vectors plus the role projections
// of the recommendation and preference forms. use_graph=false scores from raw
// stage-1 embeddings (identity projections); role_proj=false keeps propagated
// vectors but drops the projections.
class Scorer {
 public:
  Scorer(const KnowledgeGraph& g, const EmbedParams& p, const AttentionCache& cache,
         bool role_proj = true, bool use_graph = true, int max_degree = 0)
      : g_(&g), p_(&p), role_proj_(role_proj), use_graph_(use_graph) {
    if (use_graph_) prop_ = propagate_all(g, p, cache, max_degree);
  }

  const KnowledgeGraph& graph() const { return *g_; }
  const EmbedParams& params() const { return *p_; }
  const Propagation& propagation() const { return prop_; }
  bool uses_graph() const { return use_graph_; }

  Vec entity_vec(int gid) const {
    require(!g_->is_removed_gid(gid), Err::EntityRemoved, "entity_vec: entity removed");
    return use_graph_ ? prop_.final_of(gid) : p_->ent[gid];
  }

  Vec projected(Role r, const Vec& x) const {
    if (!role_proj_ || !use_graph_) return x;
    return role_project(p_->role[static_cast<int>(r)], x);
  }

  // y_v = u0.v0 + sum_{p in P_u} v1.p1
  double score_item(int user, int item, const std::vector<int>& p_u) const {
    Vec u0 = projected(Role::R0User, entity_vec(g_->gid(user_id(user))));
    Vec v = entity_vec(g_->gid(item_id(item)));
    double y = dot(u0, projected(Role::R0Item, v));
    if (!p_u.empty()) {
      Vec v1 = projected(Role::R1Item, v);
      for (int p : p_u) y += dot(v1, projected(Role::R1Attr, entity_vec(g_->gid(attr_id(p)))));
    }
    return y;
  }

  std::vector<ScoredItem> rank(int user, const std::vector<int>& v_cand,
                               const std::vector<int>& p_u, int k) const {
    require(!v_cand.empty(), Err::EmptyCandidates, "rank: empty candidate set");
    require(k >= 1, Err::InvalidInput, "rank: K must be >= 1");
    std::vector<ScoredItem> all = score_all(user, v_cand, p_u);
    std::sort(all.begin(), all.end(), [](const ScoredItem& a, const ScoredItem& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.item < b.item;
    });
    if (static_cast<int>(all.size()) > k) all.resize(k);
    return all;
  }

  // 1-based rank of target under the full candidate ordering.
  int ideal_position(int user, const std::vector<int>& v_cand, const std::vector<int>& p_u,
                     int target) const {
    require(std::find(v_cand.begin(), v_cand.end(), target) != v_cand.end(),
            Err::TargetNotCandidate, "ideal_position: target not in candidates");
    std::vector<ScoredItem> all = score_all(user, v_cand, p_u);
    double ts = 0.0;
    for (const ScoredItem& s : all)
      if (s.item == target) ts = s.score;
    int pos = 1;
    for (const ScoredItem& s : all)
      if (s.score > ts || (s.score == ts && s.item < target)) ++pos;
    return pos;
  }

  // y_p^u = u2.p2; removed attributes get sentinel 0.
  double user_pref(int user, int attr) const {
    if (g_->is_removed(attr_id(attr))) return 0.0;
    Vec u2 = projected(Role::R2User, entity_vec(g_->gid(user_id(user))));
    return dot(u2, projected(Role::R2Attr, entity_vec(g_->gid(attr_id(attr)))));
  }

  // y_p^c = sum_{pu in P_u} pu1.p1; removed attributes get sentinel 0.
  double conv_pref(const std::vector<int>& p_u, int attr) const {
    if (g_->is_removed(attr_id(attr))) return 0.0;
    Vec p1 = projected(Role::R1Attr, entity_vec(g_->gid(attr_id(attr))));
    double y = 0.0;
    for (int pu : p_u) y += dot(projected(Role::R1Attr, entity_vec(g_->gid(attr_id(pu)))), p1);
    return y;
  }

 private:
  std::vector<ScoredItem> score_all(int user, const std::vector<int>& v_cand,
                                    const std::vector<int>& p_u) const {
    Vec u0 = projected(Role::R0User, entity_vec(g_->gid(user_id(user))));
    std::vector<Vec> p1s;
    p1s.reserve(p_u.size());
    for (int p : p_u) p1s.push_back(projected(Role::R1Attr, entity_vec(g_->gid(attr_id(p)))));
    std::vector<ScoredItem> out;
    out.reserve(v_cand.size());
    for (int v : v_cand) {
      Vec vf = entity_vec(g_->gid(item_id(v)));
      double y = dot(u0, projected(Role::R0Item, vf));
      if (!p1s.empty()) {
        Vec v1 = projected(Role::R1Item, vf);
        for (const Vec& p1 : p1s) y += dot(v1, p1);
      }
      out.push_back({v, y});
    }
    return out;
  }

  const KnowledgeGraph* g_;
  const EmbedParams* p_;
  bool role_proj_;
  bool use_graph_;
  Propagation prop_;
};

// Pointwise sigmoid cross-entropy over paired scores (default), or pairwise BPR.
inline double item_loss(const std::vector<double>& pos_scores,
                        const std::vector<double>& neg_scores, bool bpr = false) {
  require(pos_scores.size() == neg_scores.size(), Err::DimensionMismatch, "item_loss");
  double loss = 0.0;
  for (std::size_t i = 0; i < pos_scores.size(); ++i) {
    if (bpr) loss -= log_sigmoid(pos_scores[i] - neg_scores[i]);
    else loss -= log_sigmoid(pos_scores[i]) + log_sigmoid(-neg_scores[i]);
  }
  return loss;
}

}  // namespace kgcrs
