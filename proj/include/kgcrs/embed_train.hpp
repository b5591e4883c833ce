#pragma once

#include <array>
#include <numeric>
#include <vector>

#include "kgcrs/embedding.hpp"
#include "kgcrs/graph.hpp"
#include "kgcrs/math.hpp"
#include "kgcrs/recommender.hpp"
#include "kgcrs/rng.hpp"
#include "kgcrs/types.hpp"

namespace kgcrs {

// Parameter-shaped gradient bundle. Blocks untouched by a loss stay zero.
struct EmbedGrads {
  std::vector<Vec> ent, ent_proj;
  std::array<Vec, 3> rel, rel_proj;
  std::vector<Mat> W;
  std::vector<Vec> b;
  std::array<RoleProj, 6> role;

  static EmbedGrads zeros_like(const EmbedParams& p) {
    EmbedGrads g;
    g.ent.assign(p.ent.size(), Vec(p.m, 0.0));
    g.ent_proj.assign(p.ent.size(), Vec(p.m, 0.0));
    for (int r = 0; r < kNumRelations; ++r) {
      g.rel[r].assign(p.m, 0.0);
      g.rel_proj[r].assign(p.m, 0.0);
    }
    g.W.assign(p.W.size(), Mat(p.m, p.m));
    g.b.assign(p.b.size(), Vec(p.m, 0.0));
    for (RoleProj& rp : g.role) {
      rp.rel_v.assign(p.dim(), 0.0);
      rp.ent_v.assign(p.dim(), 0.0);
    }
    return g;
  }
};

// p -= lr * g  (descent). lr == 0 leaves parameters bit-identical.
inline void apply_sgd(EmbedParams& p, const EmbedGrads& g, double lr) {
  if (lr == 0.0) return;
  for (std::size_t i = 0; i < p.ent.size(); ++i) {
    axpy(-lr, g.ent[i], p.ent[i]);
    axpy(-lr, g.ent_proj[i], p.ent_proj[i]);
  }
  for (int r = 0; r < kNumRelations; ++r) {
    axpy(-lr, g.rel[r], p.rel[r]);
    axpy(-lr, g.rel_proj[r], p.rel_proj[r]);
  }
  for (std::size_t k = 0; k < p.W.size(); ++k) {
    for (std::size_t i = 0; i < p.W[k].a.size(); ++i) p.W[k].a[i] -= lr * g.W[k].a[i];
    axpy(-lr, g.b[k], p.b[k]);
  }
  for (int r = 0; r < 6; ++r) {
    axpy(-lr, g.role[r].rel_v, p.role[r].rel_v);
    axpy(-lr, g.role[r].ent_v, p.role[r].ent_v);
  }
}

// Accumulates c * d f(triple) / d(stage-1 params) into gr.
inline void transd_score_grad(const EmbedParams& p, const KnowledgeGraph& g, const Triple& t,
                              double c, EmbedGrads& gr) {
  int hg = g.gid(t.head), tg = g.gid(t.tail), ri = static_cast<int>(t.rel);
  const Vec &eh = p.ent[hg], &et = p.ent[tg];
  const Vec &mh = p.ent_proj[hg], &mt = p.ent_proj[tg], &mr = p.rel_proj[ri];
  Vec d = transd_project(eh, mh, mr);
  axpy(1.0, p.rel[ri], d);
  axpy(-1.0, transd_project(et, mt, mr), d);
  for (double& x : d) x *= 2.0 * c;  // d now holds c * df/d(e_h' + e_r - e_t')
  axpy(1.0, d, gr.rel[ri]);
  double mr_d = dot(mr, d);
  axpy(mr_d, mh, gr.ent[hg]);
  axpy(1.0, d, gr.ent[hg]);
  axpy(mr_d, eh, gr.ent_proj[hg]);
  axpy(-mr_d, mt, gr.ent[tg]);
  axpy(-1.0, d, gr.ent[tg]);
  axpy(-mr_d, et, gr.ent_proj[tg]);
  axpy(dot(mh, eh) - dot(mt, et), d, gr.rel_proj[ri]);
}

// Margin loss for one (pos, neg) pair; accumulates gradients when the margin is active.
inline double graph_loss_grad(const EmbedParams& p, const KnowledgeGraph& g, const Triple& pos,
                              const Triple& neg, double lambda, EmbedGrads& gr) {
  double diff = transd_score(p, g, pos.head, pos.rel, pos.tail) -
                transd_score(p, g, neg.head, neg.rel, neg.tail);
  if (diff <= -lambda) return -lambda;
  transd_score_grad(p, g, pos, 1.0, gr);
  transd_score_grad(p, g, neg, -1.0, gr);
  return diff;
}

namespace detail {

inline Vec& touch(std::vector<Vec>& a, int gid, int n) {
  if (a[gid].empty()) a[gid].assign(n, 0.0);
  return a[gid];
}

// y += c * P_a(x) . P_b(z); accumulates dy into dx, dz and role grads.
inline double dot_proj_grad(const EmbedParams& p, Role ra, Role rb, const Vec& x, const Vec& z,
                            double c, Vec& dx, Vec& dz, EmbedGrads& gr) {
  const RoleProj& A = p.role[static_cast<int>(ra)];
  const RoleProj& B = p.role[static_cast<int>(rb)];
  Vec px = role_project(A, x);
  Vec pz = role_project(B, z);
  if (c != 0.0) {
    double a_pz = dot(A.rel_v, pz);
    axpy(c * a_pz, A.ent_v, dx);
    axpy(c, pz, dx);
    axpy(c * dot(A.ent_v, x), pz, gr.role[static_cast<int>(ra)].rel_v);
    axpy(c * a_pz, x, gr.role[static_cast<int>(ra)].ent_v);
    double b_px = dot(B.rel_v, px);
    axpy(c * b_px, B.ent_v, dz);
    axpy(c, px, dz);
    axpy(c * dot(B.ent_v, z), px, gr.role[static_cast<int>(rb)].rel_v);
    axpy(c * b_px, z, gr.role[static_cast<int>(rb)].ent_v);
  }
  return dot(px, pz);
}

}  // namespace detail

// Sends D-vector gradients on final embeddings backwards through the propagation
// layers into W, b and the base entity embeddings. Attention weights are constants
// (cache refreshed only at epoch boundaries), so no gradient flows into them.
inline void backprop_propagation(const KnowledgeGraph& g, const EmbedParams& p,
                                 const Propagation& prop, std::vector<Vec>& dfinal,
                                 EmbedGrads& gr) {
  int n = g.total_entities(), m = p.m, k = p.k_prop;
  std::vector<std::vector<Vec>> dlayer(k, std::vector<Vec>(n));
  for (int gid = 0; gid < n; ++gid) {
    if (dfinal[gid].empty()) continue;
    for (int j = 0; j < k; ++j) {
      Vec& d = detail::touch(dlayer[j], gid, m);
      for (int i = 0; i < m; ++i) d[i] += dfinal[gid][static_cast<std::size_t>(j) * m + i];
    }
  }
  Vec g_pre(m), u(m);
  for (int j = k - 1; j >= 1; --j) {
    for (int gid = 0; gid < n; ++gid) {
      if (dlayer[j][gid].empty()) continue;
      const Vec& out = prop.layer[j][gid];
      for (int i = 0; i < m; ++i) g_pre[i] = out[i] > 0.0 ? dlayer[j][gid][i] : 0.0;
      outer_acc(1.0, g_pre, prop.input[j - 1][gid], gr.W[j - 1]);
      axpy(1.0, g_pre, gr.b[j - 1]);
      matvec_t(p.W[j - 1], g_pre, u);
      axpy(1.0, u, detail::touch(dlayer[j - 1], gid, m));
      for (const auto& [ai, w] : prop.weights.used[gid])
        axpy(w, u, detail::touch(dlayer[j - 1], g.adj(gid)[ai].nbr, m));
    }
  }
  for (int gid = 0; gid < n; ++gid)
    if (!dlayer[0][gid].empty()) axpy(1.0, dlayer[0][gid], gr.ent[gid]);
}

struct ItemPair {
  int user, pos_item, neg_item;
  std::vector<int> attrs;  // known positive attributes P_u for the pair
};

// Item-ranking loss over the batch; accumulates gradients through role projections
// and the propagation stack. Returns the summed loss.
inline double item_loss_grad(const KnowledgeGraph& g, const EmbedParams& p,
                             const Propagation& prop, const std::vector<ItemPair>& pairs,
                             bool bpr, EmbedGrads& gr) {
  int n = g.total_entities();
  std::vector<Vec> dfinal(n), fcache(n);
  auto F = [&](int gid) -> const Vec& {
    if (fcache[gid].empty()) fcache[gid] = prop.final_of(gid);
    return fcache[gid];
  };
  int d = p.dim();
  double loss = 0.0;
  for (const ItemPair& pr : pairs) {
    int ug = g.gid(user_id(pr.user));
    int pg = g.gid(item_id(pr.pos_item));
    int ng = g.gid(item_id(pr.neg_item));
    // forward scores
    auto score_of = [&](int vg) {
      double y = detail::dot_proj_grad(p, Role::R0User, Role::R0Item, F(ug), F(vg), 0.0,
                                       detail::touch(dfinal, ug, d), detail::touch(dfinal, vg, d),
                                       gr);
      for (int a : pr.attrs) {
        int ag = g.gid(attr_id(a));
        y += detail::dot_proj_grad(p, Role::R1Item, Role::R1Attr, F(vg), F(ag), 0.0,
                                   detail::touch(dfinal, vg, d), detail::touch(dfinal, ag, d), gr);
      }
      return y;
    };
    double y_pos = score_of(pg), y_neg = score_of(ng);
    double c_pos, c_neg;
    if (bpr) {
      loss += softplus(-(y_pos - y_neg));
      c_pos = sigmoid(y_pos - y_neg) - 1.0;
      c_neg = -c_pos;
    } else {
      loss += softplus(-y_pos) + softplus(y_neg);
      c_pos = sigmoid(y_pos) - 1.0;
      c_neg = sigmoid(y_neg);
    }
    auto backprop_score = [&](int vg, double c) {
      detail::dot_proj_grad(p, Role::R0User, Role::R0Item, F(ug), F(vg), c,
                            detail::touch(dfinal, ug, d), detail::touch(dfinal, vg, d), gr);
      for (int a : pr.attrs) {
        int ag = g.gid(attr_id(a));
        detail::dot_proj_grad(p, Role::R1Item, Role::R1Attr, F(vg), F(ag), c,
                              detail::touch(dfinal, vg, d), detail::touch(dfinal, ag, d), gr);
      }
    };
    backprop_score(pg, c_pos);
    backprop_score(ng, c_neg);
  }
  backprop_propagation(g, p, prop, dfinal, gr);
  return loss;
}

struct TrainHyper {
  int epochs = 1;
  int batch_size = 64;
  double lr = 0.001;
  double lambda = 4.0;
  bool bpr = false;
  int max_degree = 0;
};

struct BatchLog {
  int epoch, batch;
  double loss_graph, loss_item;
};

// Offline two-stage loop: per batch, a margin-loss step on the TransD parameters,
// then an item-loss step through propagation; attention refreshed at epoch bounds.
inline std::vector<BatchLog> train_offline(const KnowledgeGraph& g, EmbedParams& p,
                                           AttentionCache& cache, const TrainHyper& h, Rng& rng) {
  cache.build(g, p);
  std::vector<int> ids(g.triples().size());
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<BatchLog> logs;
  for (int epoch = 1; epoch <= h.epochs; ++epoch) {
    rng.shuffle(ids);
    int n_batches = (static_cast<int>(ids.size()) + h.batch_size - 1) / h.batch_size;
    for (int bi = 0; bi < n_batches; ++bi) {
      EmbedGrads gr = EmbedGrads::zeros_like(p);
      double loss_g = 0.0;
      std::vector<ItemPair> pairs;
      int lo = bi * h.batch_size;
      int hi = std::min<int>(lo + h.batch_size, static_cast<int>(ids.size()));
      for (int i = lo; i < hi; ++i) {
        const Triple& pos = g.triples()[ids[i]];
        EntityId nt;
        try {
          nt = negative_sample(g, pos.head, pos.rel, rng);
        } catch (const Error& e) {
          if (e.code == Err::NoNegativeAvailable) continue;  // fully linked head; skip
          throw;
        }
        loss_g += graph_loss_grad(p, g, pos, Triple{pos.head, pos.rel, nt}, h.lambda, gr);
        if (pos.rel == Relation::UserItem)
          pairs.push_back({pos.head.index, pos.tail.index, nt.index,
                           g.item_attrs(pos.tail.index)});
      }
      apply_sgd(p, gr, h.lr);
      double loss_i = 0.0;
      if (!pairs.empty()) {
        gr = EmbedGrads::zeros_like(p);
        Propagation prop = propagate_all(g, p, cache, h.max_degree);
        loss_i = item_loss_grad(g, p, prop, pairs, h.bpr, gr);
        apply_sgd(p, gr, h.lr);
      }
      require(p.finite(), Err::DivergenceDetected, "train_offline: non-finite parameters");
      logs.push_back({epoch, bi, loss_g, loss_i});
    }
    cache.build(g, p);
  }
  return logs;
}

// One or more item-loss passes on the session copies, pairing the user's historical
// positives against rejected items. Entities already pruned from the session graph
// are skipped (their triples are no longer effective).
inline void session_finetune(EmbedParams& sp, const KnowledgeGraph& gs,
                             const AttentionCache& cache, int user,
                             const std::vector<int>& positives, const std::vector<int>& v_neg,
                             int steps, double lr, bool bpr = false, int max_degree = 0) {
  if (steps <= 0 || lr == 0.0) return;
  std::vector<ItemPair> pairs;
  for (int pos : positives) {
    if (gs.is_removed(item_id(pos))) continue;
    std::vector<int> attrs;
    for (int a : gs.item_attrs(pos))
      if (!gs.is_removed(attr_id(a))) attrs.push_back(a);
    for (int neg : v_neg) {
      if (neg == pos || gs.is_removed(item_id(neg))) continue;
      pairs.push_back({user, pos, neg, attrs});
    }
  }
  if (pairs.empty()) return;
  for (int s = 0; s < steps; ++s) {
    EmbedGrads gr = EmbedGrads::zeros_like(sp);
    Propagation prop = propagate_all(gs, sp, cache, max_degree);
    item_loss_grad(gs, sp, prop, pairs, bpr, gr);
    apply_sgd(sp, gr, lr);
  }
  require(sp.finite(), Err::DivergenceDetected, "session_finetune: non-finite parameters");
}

}  // namespace kgcrs
