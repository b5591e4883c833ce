#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "kgcrs/graph.hpp"
#include "kgcrs/math.hpp"
#include "kgcrs/rng.hpp"
#include "kgcrs/types.hpp"

namespace kgcrs {

// Post-propagation projection roles: one per (relation, endpoint-kind) slot.
enum class Role : int {
  R0User = 0,
  R0Item = 1,
  R1Item = 2,
  R1Attr = 3,
  R2User = 4,
  R2Attr = 5,
};

struct RoleProj {
  Vec rel_v, ent_v;  // proj(x) = rel_v * (ent_v . x) + x
};

// Stage-1 TransD embeddings + propagation layers + role projections.
// Entities are addressed by graph global id.
struct EmbedParams {
  int m = 0;       // per-step embedding size
  int k_prop = 1;  // number of concatenated blocks; k_prop-1 propagation layers
  std::vector<Vec> ent;       // entity embeddings e
  std::vector<Vec> ent_proj;  // TransD projection vectors m_e
  std::array<Vec, 3> rel;     // relation embeddings e_r
  std::array<Vec, 3> rel_proj;
  std::vector<Mat> W;  // k_prop-1 matrices, m x m
  std::vector<Vec> b;
  std::array<RoleProj, 6> role;

  int dim() const { return m * k_prop; }

  static EmbedParams init(const KnowledgeGraph& g, int m, int k_prop, Rng& rng,
                          double w_noise = 0.01) {
    require(m >= 1 && k_prop >= 1, Err::DimensionMismatch, "init: m and k_prop must be >= 1");
    EmbedParams p;
    p.m = m;
    p.k_prop = k_prop;
    int n = g.total_entities();
    double bound = 6.0 / std::sqrt(static_cast<double>(m));
    p.ent.resize(n);
    p.ent_proj.assign(n, Vec(m, 0.0));
    for (int i = 0; i < n; ++i) {
      p.ent[i].resize(m);
      for (int j = 0; j < m; ++j) p.ent[i][j] = rng.uniform(-bound, bound);
    }
    for (int r = 0; r < kNumRelations; ++r) {
      p.rel[r].resize(m);
      for (int j = 0; j < m; ++j) p.rel[r][j] = rng.uniform(-bound, bound);
      p.rel_proj[r].assign(m, 0.0);
    }
    p.W.assign(k_prop - 1, Mat::identity(m));
    p.b.assign(k_prop - 1, Vec(m, 0.0));
    for (Mat& w : p.W)
      for (double& x : w.a) x += rng.uniform(-w_noise, w_noise);
    int d = p.dim();
    for (RoleProj& rp : p.role) {
      rp.rel_v.assign(d, 0.0);
      rp.ent_v.assign(d, 0.0);
    }
    return p;
  }

  bool finite() const {
    for (const Vec& v : ent)
      if (!all_finite(v)) return false;
    for (const Vec& v : ent_proj)
      if (!all_finite(v)) return false;
    for (int r = 0; r < kNumRelations; ++r)
      if (!all_finite(rel[r]) || !all_finite(rel_proj[r])) return false;
    for (const Mat& w : W)
      if (!all_finite(w)) return false;
    for (const Vec& v : b)
      if (!all_finite(v)) return false;
    for (const RoleProj& rp : role)
      if (!all_finite(rp.rel_v) || !all_finite(rp.ent_v)) return false;
    return true;
  }
};

// M_re = m_r m_e^T + I, materialized (tests / reference); hot paths apply it implicitly.
inline Mat projection_matrix(const Vec& m_r, const Vec& m_e) {
  require(m_r.size() == m_e.size(), Err::DimensionMismatch, "projection_matrix");
  int n = static_cast<int>(m_r.size());
  Mat out = Mat::identity(n);
  outer_acc(1.0, m_r, m_e, out);
  return out;
}

// (m_r m_e^T + I) x = m_r (m_e . x) + x
inline Vec transd_project(const Vec& x, const Vec& m_e, const Vec& m_r) {
  Vec out = x;
  axpy(dot(m_e, x), m_r, out);
  return out;
}

inline Vec projected_head(const EmbedParams& p, int h_gid, Relation r) {
  int ri = static_cast<int>(r);
  return transd_project(p.ent[h_gid], p.ent_proj[h_gid], p.rel_proj[ri]);
}

// f(h,r,t) = || e_h' + e_r - e_t' ||^2
inline double transd_score(const EmbedParams& p, const KnowledgeGraph& g, EntityId h, Relation r,
                           EntityId t) {
  Vec hp = projected_head(p, g.gid(h), r);
  Vec tp = projected_head(p, g.gid(t), r);
  axpy(1.0, p.rel[static_cast<int>(r)], hp);
  axpy(-1.0, tp, hp);
  return sq_norm(hp);
}

inline double graph_loss(const EmbedParams& p, const KnowledgeGraph& g, const Triple& pos,
                         const Triple& neg, double lambda) {
  double d = transd_score(p, g, pos.head, pos.rel, pos.tail) -
             transd_score(p, g, neg.head, neg.rel, neg.tail);
  return d > -lambda ? d : -lambda;
}

// alpha = (M_rt e_t) . tanh(M_rh e_h + e_r)
inline double attention(const EmbedParams& p, const KnowledgeGraph& g, const Triple& t) {
  int hg = g.gid(t.head), tg = g.gid(t.tail);
  Vec hp = projected_head(p, hg, t.rel);
  axpy(1.0, p.rel[static_cast<int>(t.rel)], hp);
  for (double& x : hp) x = std::tanh(x);
  Vec tp = projected_head(p, tg, t.rel);
  return dot(tp, hp);
}

// Per-triple attention weights, refreshed only at epoch boundaries; values are a
// function of parameters alone, so copies of a graph sharing a core share a cache.
struct AttentionCache {
  std::vector<double> alpha;
  bool softmax_normalize = false;

  void build(const KnowledgeGraph& g, const EmbedParams& p) {
    alpha.resize(g.triples().size());
    for (std::size_t i = 0; i < g.triples().size(); ++i)
      alpha[i] = attention(p, g, g.triples()[i]);
  }
};

// Aggregation weight per used (entity, incident-edge) pair for the current overlay.
// used[gid] holds (index into g.adj(gid), weight); removal-filtered, degree-capped.
struct EdgeWeights {
  std::vector<std::vector<std::pair<int, double>>> used;

  static EdgeWeights compute(const KnowledgeGraph& g, const AttentionCache& cache,
                             int max_degree) {
    EdgeWeights ew;
    int n = g.total_entities();
    ew.used.resize(n);
    for (int gid = 0; gid < n; ++gid) {
      if (g.is_removed_gid(gid)) continue;
      const auto& adj = g.adj(gid);
      auto& u = ew.used[gid];
      for (int ai = 0; ai < static_cast<int>(adj.size()); ++ai) {
        if (g.is_removed_gid(adj[ai].nbr)) continue;
        if (max_degree > 0 && static_cast<int>(u.size()) >= max_degree) break;
        u.emplace_back(ai, cache.alpha[adj[ai].triple_id]);
      }
      if (cache.softmax_normalize && !u.empty()) {
        double mx = u[0].second;
        for (auto& [ai, w] : u) mx = std::max(mx, w);
        double z = 0.0;
        for (auto& [ai, w] : u) {
          w = std::exp(w - mx);
          z += w;
        }
        for (auto& [ai, w] : u) w /= z;
      }
    }
    return ew;
  }
};

// Layered propagation state over all present entities.
// layer[0] = e; layer[j] = ReLU(W^j (layer[j-1] + N^{j-1}) + b^j); final = concat.
struct Propagation {
  int m = 0, k = 1;
  std::vector<std::vector<Vec>> layer;  // k x n_entities
  std::vector<std::vector<Vec>> input;  // k-1 x n_entities: inputs to W^j
  EdgeWeights weights;

  Vec final_of(int gid) const {
    Vec out(static_cast<std::size_t>(m) * k);
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < m; ++i) out[static_cast<std::size_t>(j) * m + i] = layer[j][gid][i];
    return out;
  }
};

inline Propagation propagate_all(const KnowledgeGraph& g, const EmbedParams& p,
                                 const AttentionCache& cache, int max_degree = 0) {
  Propagation pr;
  pr.m = p.m;
  pr.k = p.k_prop;
  int n = g.total_entities();
  pr.weights = EdgeWeights::compute(g, cache, max_degree);
  pr.layer.assign(p.k_prop, std::vector<Vec>(n, Vec(p.m, 0.0)));
  pr.input.assign(p.k_prop - 1, std::vector<Vec>(n, Vec(p.m, 0.0)));
  for (int gid = 0; gid < n; ++gid)
    if (!g.is_removed_gid(gid)) pr.layer[0][gid] = p.ent[gid];
  Vec pre;
  for (int j = 1; j < p.k_prop; ++j) {
    for (int gid = 0; gid < n; ++gid) {
      if (g.is_removed_gid(gid)) continue;
      Vec& in = pr.input[j - 1][gid];
      in = pr.layer[j - 1][gid];
      for (const auto& [ai, w] : pr.weights.used[gid])
        axpy(w, pr.layer[j - 1][g.adj(gid)[ai].nbr], in);
      matvec(p.W[j - 1], in, pre);
      axpy(1.0, p.b[j - 1], pre);
      Vec& out = pr.layer[j][gid];
      for (int i = 0; i < p.m; ++i) out[i] = relu(pre[i]);
    }
  }
  return pr;
}

// Single-entity propagation over the (k_prop-1)-hop ball; bit-identical to the
// corresponding rows of propagate_all because per-entity arithmetic is unchanged.
inline Vec propagate(const KnowledgeGraph& g, const EmbedParams& p, const AttentionCache& cache,
                     EntityId h, int max_degree = 0) {
  require(!g.is_removed(h), Err::EntityRemoved, "propagate: entity removed");
  int h_gid = g.gid(h);
  int depth = p.k_prop - 1;
  // dist[gid] = hop distance from h, capped at depth.
  std::vector<int> order;
  std::vector<int> dist(g.total_entities(), -1);
  dist[h_gid] = 0;
  order.push_back(h_gid);
  EdgeWeights ew;
  ew.used.resize(g.total_entities());
  for (std::size_t qi = 0; qi < order.size(); ++qi) {
    int gid = order[qi];
    if (dist[gid] >= depth) continue;
    const auto& adj = g.adj(gid);
    auto& u = ew.used[gid];
    for (int ai = 0; ai < static_cast<int>(adj.size()); ++ai) {
      if (g.is_removed_gid(adj[ai].nbr)) continue;
      if (max_degree > 0 && static_cast<int>(u.size()) >= max_degree) break;
      u.emplace_back(ai, cache.alpha[adj[ai].triple_id]);
      if (dist[adj[ai].nbr] < 0) {
        dist[adj[ai].nbr] = dist[gid] + 1;
        order.push_back(adj[ai].nbr);
      }
    }
    if (cache.softmax_normalize && !u.empty()) {
      double mx = u[0].second;
      for (auto& [ai, w] : u) mx = std::max(mx, w);
      double z = 0.0;
      for (auto& [ai, w] : u) {
        w = std::exp(w - mx);
        z += w;
      }
      for (auto& [ai, w] : u) w /= z;
    }
  }
  std::vector<std::vector<Vec>> layer(p.k_prop);
  for (int j = 0; j < p.k_prop; ++j) layer[j].assign(g.total_entities(), Vec());
  for (int gid : order) layer[0][gid] = p.ent[gid];
  Vec pre;
  for (int j = 1; j < p.k_prop; ++j) {
    for (int gid : order) {
      if (dist[gid] > depth - j) continue;  // only nodes whose layer j is needed
      Vec in = layer[j - 1][gid];
      for (const auto& [ai, w] : ew.used[gid]) axpy(w, layer[j - 1][g.adj(gid)[ai].nbr], in);
      matvec(p.W[j - 1], in, pre);
      axpy(1.0, p.b[j - 1], pre);
      Vec& out = layer[j][gid];
      out.resize(p.m);
      for (int i = 0; i < p.m; ++i) out[i] = relu(pre[i]);
    }
  }
  Vec out(static_cast<std::size_t>(p.m) * p.k_prop);
  for (int j = 0; j < p.k_prop; ++j)
    for (int i = 0; i < p.m; ++i) out[static_cast<std::size_t>(j) * p.m + i] = layer[j][h_gid][i];
  return out;
}

// Tail-corruption negative sampling, uniform over entities of the tail kind that are
// not linked to (h, r) by an effective triple and are themselves present.
inline EntityId negative_sample(const KnowledgeGraph& g, EntityId h, Relation r, Rng& rng) {
  EntityKind tk = tail_kind(r);
  int n = g.count(tk);
  int h_gid = g.gid(h);
  auto linked = [&](int idx) {
    EntityId t{tk, idx};
    if (g.is_removed(t)) return true;  // removed tails are not candidates
    int tg = g.gid(t);
    for (const auto& e : g.adj(h_gid))
      if (e.rel == r && e.nbr == tg && e.outgoing) return true;
    return false;
  };
  for (int tries = 0; tries < 64; ++tries) {
    int idx = rng.uniform_int(n);
    if (!linked(idx)) return {tk, idx};
  }
  std::vector<int> valid;
  for (int idx = 0; idx < n; ++idx)
    if (!linked(idx)) valid.push_back(idx);
  require(!valid.empty(), Err::NoNegativeAvailable, "negative_sample: no unlinked tail");
  return {tk, valid[rng.uniform_int(static_cast<int>(valid.size()))]};
}

}  // namespace kgcrs
