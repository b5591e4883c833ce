#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "kgcrs/recommender.hpp"
#include "kgcrs/rng.hpp"
#include "kgcrs/session.hpp"
#include "kgcrs/types.hpp"

namespace kgcrs {

struct OnlineMetrics {
  std::map<int, double> sr_at;  // T level -> success ratio
  double at = 0.0;
  double apa = 0.0;
  double mean_positive_actions = 0.0;  // companion counter to APA
  int n_sessions = 0;
};

// SR@T / AT / APA from session records. A quit session consumed the full budget,
// so it contributes t_max turns to AT.
inline OnlineMetrics online_metrics(const std::vector<SessionRecord>& records,
                                    const std::vector<int>& t_levels, int t_max) {
  require(!records.empty(), Err::EmptyLog, "online_metrics: no records");
  OnlineMetrics m;
  m.n_sessions = static_cast<int>(records.size());
  double inv = 1.0 / static_cast<double>(records.size());
  for (int t : t_levels) m.sr_at[t] = 0.0;
  for (const SessionRecord& r : records) {
    bool ok = r.outcome == Outcome::Success;
    for (int t : t_levels)
      if (ok && r.turns <= t) m.sr_at[t] += inv;
    m.at += (ok ? r.turns : t_max) * inv;
    if (r.turns > 0) m.apa += static_cast<double>(r.positive_actions) / r.turns * inv;
    m.mean_positive_actions += r.positive_actions * inv;
  }
  return m;
}

struct OfflineMetrics {
  std::map<int, double> precision, recall, ndcg;
  double auc = 0.0;
  int n_users = 0;
};

// Top-K ranking metrics per user, averaged. Per user, candidates are all items
// minus that user's training positives; scoring uses no conversational attributes.
inline OfflineMetrics offline_ranking_metrics(const Scorer& sc,
                                              const std::vector<std::vector<int>>& test_pos,
                                              const std::vector<std::vector<int>>& train_pos,
                                              const std::vector<int>& ks) {
  int n_items = sc.graph().n_items();
  OfflineMetrics m;
  for (int k : ks) {
    m.precision[k] = 0.0;
    m.recall[k] = 0.0;
    m.ndcg[k] = 0.0;
  }
  static const std::vector<int> kNoAttrs;
  for (int u = 0; u < static_cast<int>(test_pos.size()); ++u) {
    if (test_pos[u].empty()) continue;
    std::vector<int> cand;
    cand.reserve(n_items);
    const std::vector<int>& tr = train_pos[u];
    for (int v = 0; v < n_items; ++v)
      if (!std::binary_search(tr.begin(), tr.end(), v)) cand.push_back(v);
    if (cand.empty()) continue;
    std::vector<ScoredItem> ranked = sc.rank(u, cand, kNoAttrs, static_cast<int>(cand.size()));
    ++m.n_users;
    int n_pos = static_cast<int>(test_pos[u].size());
    for (int k : ks) {
      int hits = 0;
      double dcg = 0.0;
      for (int i = 0; i < std::min<int>(k, static_cast<int>(ranked.size())); ++i) {
        if (std::binary_search(test_pos[u].begin(), test_pos[u].end(), ranked[i].item)) {
          ++hits;
          dcg += 1.0 / std::log2(i + 2.0);
        }
      }
      double idcg = 0.0;
      for (int i = 0; i < std::min(k, n_pos); ++i) idcg += 1.0 / std::log2(i + 2.0);
      m.precision[k] += static_cast<double>(hits) / k;
      m.recall[k] += static_cast<double>(hits) / n_pos;
      m.ndcg[k] += idcg > 0.0 ? dcg / idcg : 0.0;
    }
  }
  require(m.n_users > 0, Err::NoTestData, "offline_ranking_metrics: no test users");
  for (int k : ks) {
    m.precision[k] /= m.n_users;
    m.recall[k] /= m.n_users;
    m.ndcg[k] /= m.n_users;
  }
  return m;
}

// Pairwise AUC with uniform negative sampling from each user's non-interacted items
// (neg_per_pos per positive); ties count one half.
inline double auc_metric(const Scorer& sc, const std::vector<std::vector<int>>& test_pos,
                         const std::vector<std::vector<int>>& interacted, Rng& rng,
                         int neg_per_pos = 1) {
  int n_items = sc.graph().n_items();
  static const std::vector<int> kNoAttrs;
  double wins = 0.0;
  long long pairs = 0;
  for (int u = 0; u < static_cast<int>(test_pos.size()); ++u) {
    if (test_pos[u].empty()) continue;
    const std::vector<int>& seen = interacted[u];
    std::vector<int> negatives;
    negatives.reserve(n_items);
    for (int v = 0; v < n_items; ++v)
      if (!std::binary_search(seen.begin(), seen.end(), v)) negatives.push_back(v);
    if (negatives.empty()) continue;
    for (int pos : test_pos[u]) {
      double y_pos = sc.score_item(u, pos, kNoAttrs);
      for (int s = 0; s < neg_per_pos; ++s) {
        int neg = negatives[rng.uniform_int(static_cast<int>(negatives.size()))];
        double y_neg = sc.score_item(u, neg, kNoAttrs);
        if (y_pos > y_neg) wins += 1.0;
        else if (y_pos == y_neg) wins += 0.5;
        ++pairs;
      }
    }
  }
  require(pairs > 0, Err::NoTestData, "auc: no test pairs");
  return wins / static_cast<double>(pairs);
}

}  // namespace kgcrs
