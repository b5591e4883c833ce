#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "kgcrs/graph.hpp"
#include "kgcrs/math.hpp"
#include "kgcrs/recommender.hpp"
#include "kgcrs/rng.hpp"
#include "kgcrs/types.hpp"

namespace kgcrs {

// Dialogue history codes.
constexpr int kHistPosAsk = 1;
constexpr int kHistIrrAsk = 0;
constexpr int kHistRejRec = -1;

// Per-attribute entropy of membership over the candidate set.
// Binary reading by default; single_term gives the -p ln p variant.
inline Vec entropy_vector(const KnowledgeGraph& g, const std::vector<int>& v_cand,
                          bool single_term = false) {
  require(!v_cand.empty(), Err::EmptyCandidates, "entropy_vector: empty candidates");
  std::vector<int> cnt(g.n_attrs(), 0);
  for (int v : v_cand)
    for (int a : g.item_attrs(v)) ++cnt[a];
  Vec out(g.n_attrs(), 0.0);
  double n = static_cast<double>(v_cand.size());
  for (int a = 0; a < g.n_attrs(); ++a) {
    double q = cnt[a] / n;
    double e = 0.0;
    if (q > 0.0) e -= q * std::log(q);
    if (!single_term && q < 1.0) e -= (1.0 - q) * std::log(1.0 - q);
    out[a] = e;
  }
  return out;
}

// y_p^u per attribute (Scorer applies the removed-attribute sentinel).
inline Vec user_pref_vector(const Scorer& sc, int user) {
  Vec out(sc.graph().n_attrs());
  for (int a = 0; a < sc.graph().n_attrs(); ++a) out[a] = sc.user_pref(user, a);
  return out;
}

// y_p^c per attribute, summed over the session's confirmed attributes.
inline Vec conv_pref_vector(const Scorer& sc, const std::vector<int>& p_u) {
  Vec out(sc.graph().n_attrs());
  for (int a = 0; a < sc.graph().n_attrs(); ++a) out[a] = sc.conv_pref(p_u, a);
  return out;
}

// One-hot candidate-count bin plus the turn-outcome history padded to T.
inline Vec dialogue_vector(const std::vector<int>& history, int candidate_count, int T,
                           const std::vector<int>& bins) {
  require(static_cast<int>(history.size()) <= T, Err::HistoryTooLong, "dialogue_vector");
  int B = static_cast<int>(bins.size()) + 1;
  Vec out(B + T, 0.0);
  int bin = B - 1;
  for (int i = 0; i < static_cast<int>(bins.size()); ++i)
    if (candidate_count <= bins[i]) {
      bin = i;
      break;
    }
  out[bin] = 1.0;
  for (std::size_t i = 0; i < history.size(); ++i) out[B + i] = history[i];
  return out;
}

// s = [s_ent, s_user, s_conv, s_dial]; the graph-conditioned halves can be ablated.
inline Vec encode_state(const Scorer& sc, int user, const std::vector<int>& p_u,
                        const std::vector<int>& v_cand, const std::vector<int>& history, int T,
                        const std::vector<int>& bins, bool graph_con = true,
                        bool single_term_entropy = false,
                        const Vec* precomputed_entropy = nullptr) {
  const KnowledgeGraph& g = sc.graph();
  Vec s_ent = precomputed_entropy ? *precomputed_entropy
                                  : entropy_vector(g, v_cand, single_term_entropy);
  Vec s_user(g.n_attrs(), 0.0), s_conv(g.n_attrs(), 0.0);
  if (graph_con) {
    s_user = user_pref_vector(sc, user);
    s_conv = conv_pref_vector(sc, p_u);
  }
  Vec s_dial = dialogue_vector(history, static_cast<int>(v_cand.size()), T, bins);
  Vec out;
  out.reserve(s_ent.size() + s_user.size() + s_conv.size() + s_dial.size());
  for (const Vec* part : {&s_ent, &s_user, &s_conv, &s_dial})
    out.insert(out.end(), part->begin(), part->end());
  return out;
}

// One-hidden-layer MLP with masked softmax head. blocked[a] != 0 excludes action a.
struct PolicyNet {
  int in = 0, hidden = 0, out = 0;
  Mat W1, W2;
  Vec b1, b2;

  static PolicyNet init(int in, int hidden, int out, Rng& rng) {
    PolicyNet n;
    n.in = in;
    n.hidden = hidden;
    n.out = out;
    n.W1 = Mat(hidden, in);
    n.W2 = Mat(out, hidden);
    n.b1.assign(hidden, 0.0);
    n.b2.assign(out, 0.0);
    double s1 = std::sqrt(6.0 / (in + hidden));
    for (double& x : n.W1.a) x = rng.uniform(-s1, s1);
    double s2 = std::sqrt(6.0 / (hidden + out));
    for (double& x : n.W2.a) x = rng.uniform(-s2, s2);
    return n;
  }

  struct Fwd {
    Vec h;      // hidden activations
    Vec probs;  // masked distribution
  };

  Fwd forward_full(const Vec& s, const std::vector<std::uint8_t>& blocked) const {
    require(static_cast<int>(s.size()) == in, Err::DimensionMismatch, "policy_forward: state size");
    require(static_cast<int>(blocked.size()) == out, Err::DimensionMismatch,
            "policy_forward: mask size");
    Fwd f;
    matvec(W1, s, f.h);
    axpy(1.0, b1, f.h);
    for (double& x : f.h) x = relu(x);
    Vec logits;
    matvec(W2, f.h, logits);
    axpy(1.0, b2, logits);
    double mx = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < out; ++a)
      if (!blocked[a]) mx = std::max(mx, logits[a]);
    require(std::isfinite(mx), Err::AllActionsMasked, "policy_forward: all actions masked");
    f.probs.assign(out, 0.0);
    double z = 0.0;
    for (int a = 0; a < out; ++a) {
      if (blocked[a]) continue;
      f.probs[a] = std::exp(logits[a] - mx);
      z += f.probs[a];
    }
    for (double& x : f.probs) x /= z;
    return f;
  }

  Vec forward(const Vec& s, const std::vector<std::uint8_t>& blocked) const {
    return forward_full(s, blocked).probs;
  }

  bool finite() const {
    return all_finite(W1) && all_finite(W2) && all_finite(b1) && all_finite(b2);
  }
};

struct PolicyGrads {
  Mat W1, W2;
  Vec b1, b2;

  static PolicyGrads zeros_like(const PolicyNet& n) {
    PolicyGrads g;
    g.W1 = Mat(n.hidden, n.in);
    g.W2 = Mat(n.out, n.hidden);
    g.b1.assign(n.hidden, 0.0);
    g.b2.assign(n.out, 0.0);
    return g;
  }
};

// Accumulates coeff * d log pi(a | s) / d theta. Masked actions carry zero gradient.
inline void logpi_grad(const PolicyNet& net, const Vec& s, const std::vector<std::uint8_t>& blocked,
                       int a, double coeff, PolicyGrads& gr) {
  PolicyNet::Fwd f = net.forward_full(s, blocked);
  Vec dlogits(net.out, 0.0);
  for (int j = 0; j < net.out; ++j)
    if (!blocked[j]) dlogits[j] = coeff * ((j == a ? 1.0 : 0.0) - f.probs[j]);
  outer_acc(1.0, dlogits, f.h, gr.W2);
  axpy(1.0, dlogits, gr.b2);
  Vec dh;
  matvec_t(net.W2, dlogits, dh);
  for (int i = 0; i < net.hidden; ++i)
    if (f.h[i] <= 0.0) dh[i] = 0.0;
  outer_acc(1.0, dh, s, gr.W1);
  axpy(1.0, dh, gr.b1);
}

enum class OptKind { SGD, Adam };

// Applies theta += lr * direction * grad (SGD) or the Adam equivalent.
// direction +1 ascends the objective (REINFORCE), -1 descends a loss.
struct PolicyOptimizer {
  OptKind kind = OptKind::SGD;
  double lr = 0.001;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int t = 0;
  PolicyGrads m, v;
  bool init_done = false;

  void step(PolicyNet& net, const PolicyGrads& g, double direction) {
    if (lr == 0.0) return;
    if (kind == OptKind::SGD) {
      sgd_block(net.W1.a, g.W1.a, direction);
      sgd_block(net.W2.a, g.W2.a, direction);
      sgd_block(net.b1, g.b1, direction);
      sgd_block(net.b2, g.b2, direction);
      return;
    }
    if (!init_done) {
      m = PolicyGrads::zeros_like(net);
      v = PolicyGrads::zeros_like(net);
      init_done = true;
    }
    ++t;
    adam_block(net.W1.a, g.W1.a, m.W1.a, v.W1.a, direction);
    adam_block(net.W2.a, g.W2.a, m.W2.a, v.W2.a, direction);
    adam_block(net.b1, g.b1, m.b1, v.b1, direction);
    adam_block(net.b2, g.b2, m.b2, v.b2, direction);
  }

 private:
  void sgd_block(Vec& x, const Vec& g, double dir) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += lr * dir * g[i];
  }
  void adam_block(Vec& x, const Vec& g, Vec& mm, Vec& vv, double dir) {
    double c1 = 1.0 - std::pow(beta1, t), c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      double gi = dir * g[i];
      mm[i] = beta1 * mm[i] + (1.0 - beta1) * gi;
      vv[i] = beta2 * vv[i] + (1.0 - beta2) * gi * gi;
      x[i] += lr * (mm[i] / c1) / (std::sqrt(vv[i] / c2) + eps);
    }
  }
};

struct TrajStep {
  Vec state;
  std::vector<std::uint8_t> blocked;
  int action;
  double reward;
};

using Trajectory = std::vector<TrajStep>;

enum class UserResponse { AcceptRec, RelevantQuestion, IrrelevantQuestion, RejectRec, Quit };

struct RewardConfig {
  double r_item = 1.0, r_attr = 0.1, r_turn = -0.01, r_quit = -0.3;
  double beta = 0.1;
  double gamma = 0.7;
  bool fg = false;  // fine-grained mode adds the rank-improvement bonus
};

inline double compute_reward(UserResponse ev, const RewardConfig& cfg,
                             std::optional<int> loc_before = std::nullopt,
                             std::optional<int> loc_after = std::nullopt) {
  switch (ev) {
    case UserResponse::AcceptRec: return cfg.r_item;
    case UserResponse::RejectRec: return cfg.r_turn;
    case UserResponse::IrrelevantQuestion: return cfg.r_turn;
    case UserResponse::Quit: return cfg.r_quit;
    case UserResponse::RelevantQuestion: {
      double r = cfg.r_attr + cfg.r_turn;
      if (cfg.fg) {
        require(loc_before.has_value() && loc_after.has_value(), Err::MissingLocation,
                "compute_reward: fine-grained relevant question needs both ranks");
        r += cfg.beta * static_cast<double>(*loc_before - *loc_after) /
             static_cast<double>(*loc_before);
      }
      return r;
    }
  }
  return 0.0;
}

inline std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    g[i] = acc;
  }
  return g;
}

// One gradient-ascent step on sum_t log pi(a_t|s_t) G_t over the whole trajectory.
inline void reinforce_update(PolicyNet& net, const Trajectory& traj, double gamma,
                             PolicyOptimizer& opt, bool mean_baseline = false) {
  if (traj.empty()) return;
  std::vector<double> rewards(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) rewards[i] = traj[i].reward;
  std::vector<double> ret = discounted_returns(rewards, gamma);
  if (mean_baseline) {
    double mean = 0.0;
    for (double x : ret) mean += x;
    mean /= static_cast<double>(ret.size());
    for (double& x : ret) x -= mean;
  }
  PolicyGrads gr = PolicyGrads::zeros_like(net);
  for (std::size_t i = 0; i < traj.size(); ++i)
    logpi_grad(net, traj[i].state, traj[i].blocked, traj[i].action, ret[i], gr);
  opt.step(net, gr, +1.0);
  require(net.finite(), Err::DivergenceDetected, "reinforce_update: non-finite policy");
}

struct ImitationExample {
  Vec state;
  std::vector<std::uint8_t> blocked;
  int action;
};

// One cross-entropy minibatch step; returns the mean CE before the update.
inline double imitation_update(PolicyNet& net, const std::vector<ImitationExample>& batch,
                               PolicyOptimizer& opt) {
  if (batch.empty()) return 0.0;
  PolicyGrads gr = PolicyGrads::zeros_like(net);
  double ce = 0.0;
  double scale = 1.0 / static_cast<double>(batch.size());
  for (const ImitationExample& ex : batch) {
    Vec probs = net.forward(ex.state, ex.blocked);
    ce -= std::log(std::max(probs[ex.action], 1e-300)) * scale;
    logpi_grad(net, ex.state, ex.blocked, ex.action, scale, gr);
  }
  opt.step(net, gr, +1.0);  // ascend mean log-likelihood == descend mean CE
  require(net.finite(), Err::DivergenceDetected, "imitation_update: non-finite policy");
  return ce;
}

}  // namespace kgcrs
