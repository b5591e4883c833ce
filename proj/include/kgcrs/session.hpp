#pragma once

#include <algorithm>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "kgcrs/embed_train.hpp"
#include "kgcrs/embedding.hpp"
#include "kgcrs/graph.hpp"
#include "kgcrs/policy.hpp"
#include "kgcrs/recommender.hpp"
#include "kgcrs/rng.hpp"
#include "kgcrs/types.hpp"

namespace kgcrs {

enum class QuestionMode { Binary, Enumerated };

// Maps question actions to attribute sets. The recommend action is index n_questions().
struct QuestionScheme {
  QuestionMode mode = QuestionMode::Binary;
  std::vector<std::vector<int>> action_attrs;  // question action -> sorted attributes
  std::vector<int> attr_action;                // attribute -> owning question action

  int n_questions() const { return static_cast<int>(action_attrs.size()); }
  int recommend_action() const { return n_questions(); }
  int n_actions() const { return n_questions() + 1; }

  static QuestionScheme binary(int n_attrs) {
    QuestionScheme s;
    s.mode = QuestionMode::Binary;
    s.action_attrs.resize(n_attrs);
    s.attr_action.resize(n_attrs);
    for (int a = 0; a < n_attrs; ++a) {
      s.action_attrs[a] = {a};
      s.attr_action[a] = a;
    }
    return s;
  }

  // attr_facet[p] = facet id in [0, n_facets); facets partition the attribute set.
  static QuestionScheme enumerated(const std::vector<int>& attr_facet, int n_facets) {
    QuestionScheme s;
    s.mode = QuestionMode::Enumerated;
    s.action_attrs.resize(n_facets);
    s.attr_action.resize(attr_facet.size());
    for (int p = 0; p < static_cast<int>(attr_facet.size()); ++p) {
      int f = attr_facet[p];
      require(f >= 0 && f < n_facets, Err::InvalidInput, "facet id out of range");
      s.action_attrs[f].push_back(p);
      s.attr_action[p] = f;
    }
    for (const auto& v : s.action_attrs)
      require(!v.empty(), Err::InvalidInput, "empty facet");
    return s;
  }
};

// Frozen global model a session copies from.
struct World {
  KnowledgeGraph g;
  EmbedParams params;
  AttentionCache cache;
  QuestionScheme scheme;
};

enum class Outcome { Ongoing, Success, Quit };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Success: return "success";
    case Outcome::Quit: return "quit";
    default: return "ongoing";
  }
}

struct SessionState {
  int t = 0;
  int user = -1, target = -1;
  std::vector<int> p_ses;  // target's attributes (simulator ground truth)
  std::vector<int> p_u, p_neg;
  std::vector<int> v_cand, v_neg;
  std::vector<std::uint8_t> asked;  // per action; recommend stays 0
  std::vector<double> r_list;
  std::vector<int> history;
  Outcome outcome = Outcome::Ongoing;
  KnowledgeGraph g;    // session copy (shares immutable core)
  EmbedParams params;  // session copy
};

struct TurnRecord {
  int turn;
  int action;
  bool ask;
  std::string response;  // pos | neg | accept | reject
  int v_cand_after;
  double reward;
  bool positive;
};

struct SessionRecord {
  int session_id = 0;
  int user = -1, target = -1;
  Outcome outcome = Outcome::Quit;
  int turns = 0;
  int positive_actions = 0;
  std::vector<TurnRecord> turn_log;
};

struct SessionConfig {
  int T = 15, K = 10;
  RewardConfig reward;
  std::vector<int> bins{10, 50, 100, 200, 500};
  bool dynamic = true;     // graph pruning + session fine-tune
  bool graph_con = true;   // s_user / s_conv in the state
  bool graph_rec = true;   // scoring from propagated embeddings
  bool role_proj = true;   // post-propagation projections in scoring
  bool entropy_single = false;
  bool bpr = false;
  int finetune_steps = 1;
  double finetune_lr = 0.001;
  int max_degree = 0;
};

inline std::vector<int> sorted_union(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline std::vector<int> sorted_intersect(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline std::vector<int> sorted_minus(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// Fresh session: copies of the global graph/parameters, one target attribute revealed.
inline SessionState start_session(const World& world, int user, int target, Rng& rng) {
  SessionState st;
  st.user = user;
  st.target = target;
  st.p_ses = world.g.item_attrs(target);
  require(!st.p_ses.empty(), Err::TargetHasNoAttributes, "start_session: target has no attributes");
  st.g = world.g;
  st.g.reset_session();
  st.params = world.params;
  int p = st.p_ses[rng.uniform_int(static_cast<int>(st.p_ses.size()))];
  st.p_u = {p};
  st.v_cand = world.g.attr_items(p);
  st.asked.assign(world.scheme.n_actions(), 0);
  st.asked[world.scheme.attr_action[p]] = 1;
  return st;
}

struct QuestionResponse {
  bool positive = false;
  std::vector<int> revealed;  // P_a intersected with P_ses
};

// The simulated user answers with the intersection of the asked attribute set and
// the target's attributes. new_neg_attrs collects this turn's additions to P_neg.
inline QuestionResponse simulate_response_question(SessionState& st, const QuestionScheme& scheme,
                                                   int action,
                                                   std::vector<int>* new_neg_attrs = nullptr) {
  require(action >= 0 && action < scheme.n_questions(), Err::InvalidInput,
          "simulate_response_question: not a question action");
  require(!st.asked[action], Err::ActionAlreadyAsked, "question already asked");
  const std::vector<int>& p_a = scheme.action_attrs[action];
  QuestionResponse resp;
  resp.revealed = sorted_intersect(p_a, st.p_ses);
  std::vector<int> negated;
  if (!resp.revealed.empty()) {
    resp.positive = true;
    st.p_u = sorted_union(st.p_u, resp.revealed);
    negated = sorted_minus(p_a, resp.revealed);
    std::vector<int> kept;
    for (int v : st.v_cand) {
      const std::vector<int>& attrs = st.g.item_attrs(v);
      if (std::includes(attrs.begin(), attrs.end(), resp.revealed.begin(), resp.revealed.end()))
        kept.push_back(v);
    }
    st.v_cand = std::move(kept);
  } else {
    negated = p_a;
  }
  negated = sorted_minus(negated, st.p_neg);  // only first-time negations prune the graph
  st.p_neg = sorted_union(st.p_neg, negated);
  if (new_neg_attrs) *new_neg_attrs = std::move(negated);
  return resp;
}

// Accept iff the target is shown; rejection removes the page from the candidates.
inline bool simulate_response_recommendation(SessionState& st, const std::vector<int>& v_rec,
                                             std::vector<int>* new_neg_items = nullptr) {
  std::vector<int> sorted_rec = v_rec;
  std::sort(sorted_rec.begin(), sorted_rec.end());
  require(std::includes(st.v_cand.begin(), st.v_cand.end(), sorted_rec.begin(), sorted_rec.end()),
          Err::RecommendationOutsideCandidates, "recommended item outside candidate set");
  bool accept = std::binary_search(sorted_rec.begin(), sorted_rec.end(), st.target);
  if (!accept) {
    st.v_cand = sorted_minus(st.v_cand, sorted_rec);
    st.v_neg = sorted_union(st.v_neg, sorted_rec);
    if (new_neg_items) *new_neg_items = std::move(sorted_rec);
  }
  return accept;
}

struct ActionContext {
  const SessionState& st;
  const QuestionScheme& scheme;
  const Scorer& scorer;
  const Vec& state_vec;
  const Vec& entropies;
  int K;
};

struct Agent {
  virtual int choose(const ActionContext& ctx, Rng& rng) = 0;
  virtual const char* name() const = 0;
  virtual ~Agent() = default;
};

// Always recommends.
struct AbsGreedyAgent final : Agent {
  int choose(const ActionContext& ctx, Rng&) override { return ctx.scheme.recommend_action(); }
  const char* name() const override { return "abs-greedy"; }
};

// Recommends with probability min(1, K/|V_cand|); otherwise asks the unasked
// question of maximal attribute entropy (facet max under enumerated questions).
struct MaxEntropyAgent final : Agent {
  int choose(const ActionContext& ctx, Rng& rng) override {
    double p_rec = std::min(1.0, static_cast<double>(ctx.K) /
                                     static_cast<double>(ctx.st.v_cand.size()));
    if (rng.uniform(0.0, 1.0) < p_rec) return ctx.scheme.recommend_action();
    int best = -1;
    double best_v = 0.0;
    for (int a = 0; a < ctx.scheme.n_questions(); ++a) {
      if (ctx.st.asked[a]) continue;
      double v = 0.0;
      for (int p : ctx.scheme.action_attrs[a]) v = std::max(v, ctx.entropies[p]);
      if (best < 0 || v > best_v) {
        best = a;
        best_v = v;
      }
    }
    return best < 0 ? ctx.scheme.recommend_action() : best;
  }
  const char* name() const override { return "max-entropy"; }
};

// Oracle teacher: asks unasked questions that intersect the target's attributes in
// random order, then recommends.
struct GroundTruthAgent final : Agent {
  int choose(const ActionContext& ctx, Rng& rng) override {
    std::vector<int> applicable;
    for (int a = 0; a < ctx.scheme.n_questions(); ++a) {
      if (ctx.st.asked[a]) continue;
      if (!sorted_intersect(ctx.scheme.action_attrs[a], ctx.st.p_ses).empty())
        applicable.push_back(a);
    }
    if (applicable.empty()) return ctx.scheme.recommend_action();
    return applicable[rng.uniform_int(static_cast<int>(applicable.size()))];
  }
  const char* name() const override { return "ground-truth"; }
};

struct PolicyAgent final : Agent {
  const PolicyNet* net;
  bool sample = true;

  PolicyAgent(const PolicyNet& n, bool sample_actions = true) : net(&n), sample(sample_actions) {}

  int choose(const ActionContext& ctx, Rng& rng) override {
    std::vector<std::uint8_t> blocked(ctx.st.asked.begin(), ctx.st.asked.end());
    Vec probs = net->forward(ctx.state_vec, blocked);
    if (sample) return rng.sample_weights(probs);
    int best = 0;
    for (int a = 1; a < static_cast<int>(probs.size()); ++a)
      if (probs[a] > probs[best]) best = a;
    return best;
  }
  const char* name() const override { return "policy"; }
};

// Replays a fixed action list (tests and transcript replay).
struct ScriptedAgent final : Agent {
  std::vector<int> actions;
  std::size_t i = 0;

  explicit ScriptedAgent(std::vector<int> a) : actions(std::move(a)) {}

  int choose(const ActionContext&, Rng&) override {
    require(i < actions.size(), Err::InvalidInput, "scripted agent exhausted");
    return actions[i++];
  }
  const char* name() const override { return "scripted"; }
};

struct SessionResult {
  Trajectory traj;
  SessionRecord record;
};

// The full conversation loop: encode state, act, simulate the user, update the
// session graph/parameters, log rewards. An unsuccessful final turn is the quit
// turn and carries r_quit.
inline SessionResult run_session(const World& world, Agent& agent, int user, int target,
                                 const SessionConfig& cfg, Rng& rng, int session_id = 0) {
  SessionResult res;
  res.record.session_id = session_id;
  res.record.user = user;
  res.record.target = target;
  SessionState st = start_session(world, user, target, rng);
  const QuestionScheme& scheme = world.scheme;
  std::unique_ptr<Scorer> scorer;
  bool dirty = true;
  try {
    for (st.t = 1; st.t <= cfg.T; ++st.t) {
      if (dirty) {
        scorer = std::make_unique<Scorer>(st.g, st.params, world.cache, cfg.role_proj,
                                          cfg.graph_rec, cfg.max_degree);
        dirty = false;
      }
      Vec ent = entropy_vector(st.g, st.v_cand, cfg.entropy_single);
      Vec state = encode_state(*scorer, user, st.p_u, st.v_cand, st.history, cfg.T, cfg.bins,
                               cfg.graph_con, cfg.entropy_single, &ent);
      std::vector<std::uint8_t> blocked(st.asked.begin(), st.asked.end());
      ActionContext ctx{st, scheme, *scorer, state, ent, cfg.K};
      int a = agent.choose(ctx, rng);
      UserResponse event;
      bool positive = false;
      int loc_before = -1;
      std::vector<int> new_neg_attrs, new_neg_items;
      if (a < scheme.n_questions()) {
        if (cfg.reward.fg &&
            !sorted_intersect(scheme.action_attrs[a], st.p_ses).empty())
          loc_before = scorer->ideal_position(user, st.v_cand, st.p_u, target);
        QuestionResponse qr = simulate_response_question(st, scheme, a, &new_neg_attrs);
        st.asked[a] = 1;
        event = qr.positive ? UserResponse::RelevantQuestion : UserResponse::IrrelevantQuestion;
        positive = qr.positive;
      } else {
        std::vector<ScoredItem> ranked = scorer->rank(user, st.v_cand, st.p_u, cfg.K);
        std::vector<int> v_rec;
        v_rec.reserve(ranked.size());
        for (const ScoredItem& s : ranked) v_rec.push_back(s.item);
        bool accept = simulate_response_recommendation(st, v_rec, &new_neg_items);
        event = accept ? UserResponse::AcceptRec : UserResponse::RejectRec;
        positive = accept;
        if (!accept && cfg.dynamic && cfg.finetune_steps > 0) {
          session_finetune(st.params, st.g, world.cache, user, st.g.user_items(user), st.v_neg,
                           cfg.finetune_steps, cfg.finetune_lr, cfg.bpr, cfg.max_degree);
          dirty = true;
        }
      }
      if (cfg.dynamic && (!new_neg_attrs.empty() || !new_neg_items.empty())) {
        for (int p : new_neg_attrs) st.g.remove_entity(attr_id(p));
        for (int v : new_neg_items) st.g.remove_entity(item_id(v));
        dirty = true;
      }
      double r;
      if (event == UserResponse::AcceptRec) {
        r = cfg.reward.r_item;
        st.outcome = Outcome::Success;
      } else if (st.t == cfg.T) {
        r = cfg.reward.r_quit;  // undissolved session: the final turn is the quit turn
        st.outcome = Outcome::Quit;
      } else if (event == UserResponse::RelevantQuestion && cfg.reward.fg) {
        if (dirty) {
          scorer = std::make_unique<Scorer>(st.g, st.params, world.cache, cfg.role_proj,
                                            cfg.graph_rec, cfg.max_degree);
          dirty = false;
        }
        int loc_after = scorer->ideal_position(user, st.v_cand, st.p_u, target);
        r = compute_reward(event, cfg.reward, loc_before, loc_after);
      } else {
        r = compute_reward(event, cfg.reward);
      }
      st.r_list.push_back(r);
      res.traj.push_back({std::move(state), std::move(blocked), a, r});
      const char* resp = event == UserResponse::AcceptRec      ? "accept"
                         : event == UserResponse::RejectRec    ? "reject"
                         : event == UserResponse::RelevantQuestion ? "pos"
                                                                   : "neg";
      res.record.turn_log.push_back({st.t, a, a < scheme.n_questions(), resp,
                                     static_cast<int>(st.v_cand.size()), r, positive});
      if (positive) ++res.record.positive_actions;
      if (st.outcome != Outcome::Ongoing) break;
      st.history.push_back(event == UserResponse::RelevantQuestion ? kHistPosAsk
                           : event == UserResponse::IrrelevantQuestion ? kHistIrrAsk
                                                                       : kHistRejRec);
      if (st.v_cand.empty()) {
        // inconsistent data edge case: nothing left to recommend
        std::cerr << "warning: candidate set exhausted in session " << session_id << "\n";
        st.outcome = Outcome::Quit;
        st.r_list.back() = cfg.reward.r_quit;
        res.traj.back().reward = cfg.reward.r_quit;
        res.record.turn_log.back().reward = cfg.reward.r_quit;
        break;
      }
    }
  } catch (const Error& e) {
    std::cerr << "warning: session " << session_id << " aborted: " << e.what() << "\n";
    st.outcome = Outcome::Quit;
    if (!res.traj.empty()) {
      st.r_list.back() = cfg.reward.r_quit;
      res.traj.back().reward = cfg.reward.r_quit;
      res.record.turn_log.back().reward = cfg.reward.r_quit;
    }
  }
  res.record.outcome = st.outcome == Outcome::Ongoing ? Outcome::Quit : st.outcome;
  res.record.turns = static_cast<int>(res.traj.size());
  return res;
}

// Draws (user, target) uniformly from pairs for each of n sessions. With parallel > 1
// sessions run on a thread pool; per-session seeds are pre-drawn so results are
// identical to the sequential order.
inline std::vector<SessionRecord> eval_sessions(const World& world, Agent& agent,
                                                const std::vector<std::pair<int, int>>& pairs,
                                                int n, const SessionConfig& cfg, Rng& rng,
                                                int parallel = 1,
                                                std::vector<Trajectory>* trajs = nullptr) {
  require(!pairs.empty(), Err::EmptySplit, "eval_sessions: no (user, target) pairs");
  std::vector<std::pair<int, int>> chosen(n);
  std::vector<std::uint64_t> seeds(n);
  for (int i = 0; i < n; ++i) {
    chosen[i] = pairs[rng.uniform_int(static_cast<int>(pairs.size()))];
    seeds[i] = rng.raw();
  }
  std::vector<SessionRecord> records(n);
  if (trajs) trajs->resize(n);
  auto run_range = [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i) {
      Rng srng(seeds[i]);
      SessionResult r = run_session(world, agent, chosen[i].first, chosen[i].second, cfg, srng, i);
      records[i] = std::move(r.record);
      if (trajs) (*trajs)[i] = std::move(r.traj);
    }
  };
  if (parallel <= 1) {
    run_range(0, n);
  } else {
    std::vector<std::thread> threads;
    int per = (n + parallel - 1) / parallel;
    for (int w = 0; w < parallel; ++w) {
      int lo = w * per, hi = std::min(n, lo + per);
      if (lo >= hi) break;
      threads.emplace_back(run_range, lo, hi);
    }
    for (auto& t : threads) t.join();
  }
  return records;
}

struct RLConfig {
  int sessions = 2000;
  double lr = 0.001;
  OptKind opt = OptKind::SGD;
  bool mean_baseline = false;
  int eval_every = 0;  // 0 = no periodic validation
  int eval_n = 200;
};

struct TrainingLogEntry {
  int sessions_done;
  double sr, at, apa;
};

// REINFORCE over training pairs; one policy update per session, applied in session
// order (single-threaded, fully seed-deterministic).
inline std::vector<TrainingLogEntry> run_training(
    const World& world, const std::vector<std::pair<int, int>>& train_pairs,
    const std::vector<std::pair<int, int>>& valid_pairs, PolicyNet& net, const SessionConfig& cfg,
    const RLConfig& rl, Rng& rng,
    const std::function<void(int, const SessionRecord&)>* on_session = nullptr) {
  std::vector<TrainingLogEntry> log;
  if (train_pairs.empty() || rl.sessions <= 0) return log;
  PolicyOptimizer opt;
  opt.kind = rl.opt;
  opt.lr = rl.lr;
  std::vector<int> order(train_pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  PolicyAgent actor(net, /*sample_actions=*/true);
  for (int s = 0; s < rl.sessions; ++s) {
    if (cursor >= order.size()) {
      rng.shuffle(order);
      cursor = 0;
    }
    const auto& [u, v] = train_pairs[order[cursor++]];
    SessionResult r = run_session(world, actor, u, v, cfg, rng, s);
    reinforce_update(net, r.traj, cfg.reward.gamma, opt, rl.mean_baseline);
    if (on_session) (*on_session)(s, r.record);
    if (rl.eval_every > 0 && (s + 1) % rl.eval_every == 0 && !valid_pairs.empty()) {
      Rng erng = rng.fork();
      PolicyAgent evaluator(net, true);
      std::vector<SessionRecord> recs =
          eval_sessions(world, evaluator, valid_pairs, rl.eval_n, cfg, erng);
      double sr = 0.0, at = 0.0, apa = 0.0;
      for (const SessionRecord& rec : recs) {
        bool ok = rec.outcome == Outcome::Success;
        sr += ok ? 1.0 : 0.0;
        at += ok ? rec.turns : cfg.T;
        apa += rec.turns > 0 ? static_cast<double>(rec.positive_actions) / rec.turns : 0.0;
      }
      double inv = 1.0 / static_cast<double>(recs.size());
      log.push_back({s + 1, sr * inv, at * inv, apa * inv});
    }
  }
  return log;
}

enum class PretrainStrategy { MaxEntropyMimic, GroundTruthMimic };

struct PretrainConfig {
  int sessions = 200;
  int epochs = 5;
  int batch = 32;
  double lr = 0.01;
  OptKind opt = OptKind::SGD;
};

// Collects (state, teacher action) pairs from rollouts of the chosen teacher and
// minimizes masked cross-entropy. Returns mean CE per epoch.
inline std::vector<double> pretrain_policy(const World& world, PolicyNet& net,
                                           PretrainStrategy strategy,
                                           const std::vector<std::pair<int, int>>& pairs,
                                           const PretrainConfig& pc, const SessionConfig& cfg,
                                           Rng& rng) {
  std::vector<double> epoch_ce;
  if (pc.epochs <= 0 || pc.sessions <= 0 || pairs.empty()) return epoch_ce;
  std::unique_ptr<Agent> teacher;
  if (strategy == PretrainStrategy::MaxEntropyMimic) teacher = std::make_unique<MaxEntropyAgent>();
  else teacher = std::make_unique<GroundTruthAgent>();
  std::vector<ImitationExample> examples;
  std::vector<Trajectory> trajs;
  eval_sessions(world, *teacher, pairs, pc.sessions, cfg, rng, 1, &trajs);
  for (const Trajectory& tr : trajs)
    for (const TrajStep& step : tr) examples.push_back({step.state, step.blocked, step.action});
  if (examples.empty()) return epoch_ce;
  PolicyOptimizer opt;
  opt.kind = pc.opt;
  opt.lr = pc.lr;
  std::vector<int> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int e = 0; e < pc.epochs; ++e) {
    rng.shuffle(order);
    double ce = 0.0;
    int n_batches = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += pc.batch) {
      std::size_t hi = std::min(order.size(), lo + pc.batch);
      std::vector<ImitationExample> batch;
      batch.reserve(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(examples[order[i]]);
      ce += imitation_update(net, batch, opt);
      ++n_batches;
    }
    epoch_ce.push_back(ce / std::max(1, n_batches));
  }
  return epoch_ce;
}

}  // namespace kgcrs
