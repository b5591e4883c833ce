#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kgcrs/graph.hpp"
#include "kgcrs/rng.hpp"
#include "kgcrs/types.hpp"

namespace kgcrs {

// A split corpus plus the training-split knowledge graph. Split item lists keep
// their per-user order (chronological when timestamps were present).
struct Dataset {
  std::vector<std::string> user_names, item_names, attr_names;
  std::vector<std::vector<int>> item_attrs;  // item -> sorted attrs
  std::vector<int> attr_facet;               // attr -> facet id
  int n_facets = 0;
  std::vector<std::vector<int>> train, valid, test;  // per-user ordered item lists
  KnowledgeGraph graph;
  std::uint64_t fingerprint = 0;

  int n_users() const { return static_cast<int>(user_names.size()); }
  int n_items() const { return static_cast<int>(item_names.size()); }
  int n_attrs() const { return static_cast<int>(attr_names.size()); }

  // (user, target) pairs whose target can seed a session.
  std::vector<std::pair<int, int>> session_pairs(const std::vector<std::vector<int>>& split) const {
    std::vector<std::pair<int, int>> out;
    for (int u = 0; u < n_users(); ++u)
      for (int v : split[u])
        if (!item_attrs[v].empty()) out.emplace_back(u, v);
    return out;
  }

  static std::vector<std::vector<int>> sorted_lists(const std::vector<std::vector<int>>& split) {
    std::vector<std::vector<int>> out = split;
    for (auto& v : out) std::sort(v.begin(), v.end());
    return out;
  }

  // Per-user union of all splits, sorted (for AUC negative exclusion).
  std::vector<std::vector<int>> interacted() const {
    std::vector<std::vector<int>> out(n_users());
    for (int u = 0; u < n_users(); ++u) {
      out[u] = train[u];
      out[u].insert(out[u].end(), valid[u].begin(), valid[u].end());
      out[u].insert(out[u].end(), test[u].begin(), test[u].end());
      std::sort(out[u].begin(), out[u].end());
    }
    return out;
  }
};

namespace detail {

struct RawData {
  std::vector<std::string> user_names, item_names, attr_names;
  // per user: (timestamp, item) in file order; ts = -1 when absent
  std::vector<std::vector<std::pair<long long, int>>> inter;
  bool timestamps = false;
  std::vector<std::vector<int>> item_attrs;
  std::vector<int> attr_facet;
  int n_facets = 0;
};

inline std::uint64_t hash_dataset(const Dataset& d) {
  std::uint64_t h = d.graph.fingerprint();
  h = fnv1a_int(d.n_facets, h);
  for (int f : d.attr_facet) h = fnv1a_int(f, h);
  for (const auto* split : {&d.train, &d.valid, &d.test}) {
    h = fnv1a_int(static_cast<int>(split->size()), h);
    for (const auto& items : *split) {
      h = fnv1a_int(static_cast<int>(items.size()), h);
      for (int v : items) h = fnv1a_int(v, h);
    }
  }
  for (const std::string& s : d.user_names) h = fnv1a(s.data(), s.size(), h);
  for (const std::string& s : d.item_names) h = fnv1a(s.data(), s.size(), h);
  for (const std::string& s : d.attr_names) h = fnv1a(s.data(), s.size(), h);
  return h;
}

// Split + graph construction shared by ingestion and the synthetic generator.
inline Dataset finalize(RawData raw, double r_train, double r_valid, int min_interactions,
                        Rng& rng) {
  require(r_train > 0.0 && r_valid >= 0.0 && r_train + r_valid < 1.0 + 1e-12, Err::InvalidInput,
          "bad split ratios");
  Dataset d;
  d.item_names = std::move(raw.item_names);
  d.attr_names = std::move(raw.attr_names);
  d.item_attrs = std::move(raw.item_attrs);
  d.attr_facet = std::move(raw.attr_facet);
  d.n_facets = raw.n_facets;
  for (auto& v : d.item_attrs) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  // keep users meeting the interaction threshold
  for (std::size_t u = 0; u < raw.user_names.size(); ++u) {
    if (static_cast<int>(raw.inter[u].size()) < min_interactions) continue;
    d.user_names.push_back(raw.user_names[u]);
    auto seq = raw.inter[u];
    if (raw.timestamps)
      std::stable_sort(seq.begin(), seq.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
    else
      rng.shuffle(seq);
    int n = static_cast<int>(seq.size());
    int n_tr = static_cast<int>(r_train * n);
    int n_va = static_cast<int>(r_valid * n);
    std::vector<int> tr, va, te;
    for (int i = 0; i < n; ++i) {
      int item = seq[i].second;
      if (i < n_tr) tr.push_back(item);
      else if (i < n_tr + n_va) va.push_back(item);
      else te.push_back(item);
    }
    d.train.push_back(std::move(tr));
    d.valid.push_back(std::move(va));
    d.test.push_back(std::move(te));
  }
  require(!d.user_names.empty(), Err::EmptySplit, "no users survive the interaction threshold");
  bool any_train = false, any_test = false;
  for (const auto& v : d.train) any_train |= !v.empty();
  for (const auto& v : d.test) any_test |= !v.empty();
  require(any_train, Err::EmptySplit, "training split is empty");
  require(any_test, Err::EmptySplit, "test split is empty");

  std::vector<Triple> triples;
  for (int u = 0; u < d.n_users(); ++u)
    for (int v : d.train[u]) triples.push_back({user_id(u), Relation::UserItem, item_id(v)});
  for (int v = 0; v < d.n_items(); ++v)
    for (int a : d.item_attrs[v]) triples.push_back({item_id(v), Relation::ItemAttr, attr_id(a)});
  for (int u = 0; u < d.n_users(); ++u) {
    std::vector<int> prefs;
    for (int v : d.train[u])
      for (int a : d.item_attrs[v]) prefs.push_back(a);
    std::sort(prefs.begin(), prefs.end());
    prefs.erase(std::unique(prefs.begin(), prefs.end()), prefs.end());
    for (int a : prefs) triples.push_back({user_id(u), Relation::UserAttr, attr_id(a)});
  }
  d.graph = KnowledgeGraph::build({d.n_users(), d.n_items(), d.n_attrs()}, std::move(triples));
  d.fingerprint = hash_dataset(d);
  return d;
}

inline std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, '\t')) out.push_back(tok);
  return out;
}

inline std::vector<std::vector<std::string>> read_tsv(const std::string& path, std::size_t min_cols,
                                                      std::size_t max_cols) {
  std::ifstream in(path);
  require(in.good(), Err::ParseError, "cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cols = split_tsv(line);
    require(cols.size() >= min_cols && cols.size() <= max_cols, Err::ParseError,
            path + " line " + std::to_string(line_no) + ": wrong column count");
    rows.push_back(std::move(cols));
  }
  return rows;
}

}  // namespace detail

// Builds a dataset from interaction/attribute/facet TSVs. String ids are mapped to
// dense indices in order of first appearance. Duplicate (user,item) interactions
// collapse to the earliest occurrence; users below the interaction threshold drop.
inline Dataset ingest(const std::string& interactions_path, const std::string& item_attrs_path,
                      const std::string& facets_path, double r_train, double r_valid,
                      int min_interactions, Rng& rng) {
  detail::RawData raw;
  std::map<std::string, int> umap, vmap, pmap;
  auto intern = [](std::map<std::string, int>& m, std::vector<std::string>& names,
                   const std::string& s) {
    auto it = m.find(s);
    if (it != m.end()) return it->second;
    int id = static_cast<int>(names.size());
    m.emplace(s, id);
    names.push_back(s);
    return id;
  };

  auto inter_rows = detail::read_tsv(interactions_path, 2, 3);
  require(!inter_rows.empty(), Err::ParseError, "no interactions in " + interactions_path);
  bool with_ts = inter_rows[0].size() == 3;
  raw.timestamps = with_ts;
  std::map<std::pair<int, int>, bool> seen;
  for (const auto& row : inter_rows) {
    require((row.size() == 3) == with_ts, Err::ParseError,
            "mixed timestamp presence in " + interactions_path);
    int u = intern(umap, raw.user_names, row[0]);
    int v = intern(vmap, raw.item_names, row[1]);
    long long ts = -1;
    if (with_ts) {
      try {
        ts = std::stoll(row[2]);
      } catch (...) {
        fail(Err::ParseError, "bad timestamp '" + row[2] + "' in " + interactions_path);
      }
    }
    if (seen.emplace(std::make_pair(u, v), true).second) {
      if (static_cast<int>(raw.inter.size()) <= u) raw.inter.resize(u + 1);
      raw.inter[u].emplace_back(ts, v);
    }
  }
  raw.inter.resize(raw.user_names.size());

  for (const auto& row : detail::read_tsv(item_attrs_path, 2, 2)) {
    int v = intern(vmap, raw.item_names, row[0]);
    int p = intern(pmap, raw.attr_names, row[1]);
    if (static_cast<int>(raw.item_attrs.size()) <= v) raw.item_attrs.resize(v + 1);
    raw.item_attrs[v].push_back(p);
  }
  raw.item_attrs.resize(raw.item_names.size());

  raw.attr_facet.assign(raw.attr_names.size(), -1);
  std::map<std::string, int> fmap;
  if (!facets_path.empty()) {
    for (const auto& row : detail::read_tsv(facets_path, 2, 2)) {
      auto it = pmap.find(row[0]);
      if (it == pmap.end()) continue;  // facet entry for an attribute никто references
      auto fit = fmap.find(row[1]);
      int f;
      if (fit == fmap.end()) {
        f = static_cast<int>(fmap.size());
        fmap.emplace(row[1], f);
      } else {
        f = fit->second;
      }
      raw.attr_facet[it->second] = f;
    }
  }
  raw.n_facets = static_cast<int>(fmap.size());
  for (int p = 0; p < static_cast<int>(raw.attr_facet.size()); ++p)
    if (raw.attr_facet[p] < 0) raw.attr_facet[p] = raw.n_facets++;  // singleton facet

  return detail::finalize(std::move(raw), r_train, r_valid, min_interactions, rng);
}

struct SyntheticOpts {
  int n_users = 30;
  int per_user = 20;
  int pattern_bits = 1;    // user preferences concentrate on this many fixed bits
  bool complement = false; // add a paired attribute for each clear bit
  double r_train = 0.7, r_valid = 0.2;
};

// Bit-pattern world: 2^n_bits items; item i carries attribute j iff bit j of i is
// set. With complement=true, a clear bit j instead carries attribute n_bits+j and
// facets pair the two, so every facet question has a positive answer and splits the
// candidate set exactly in half.
inline Dataset make_synthetic(int n_bits, const SyntheticOpts& opts, Rng& rng) {
  require(n_bits >= 1 && n_bits <= 12, Err::InvalidInput, "n_bits must be in [1,12]");
  detail::RawData raw;
  int n_items = 1 << n_bits;
  raw.timestamps = true;
  for (int v = 0; v < n_items; ++v) raw.item_names.push_back("v" + std::to_string(v));
  int n_attrs = opts.complement ? 2 * n_bits : n_bits;
  for (int p = 0; p < n_attrs; ++p) raw.attr_names.push_back("p" + std::to_string(p));
  raw.item_attrs.resize(n_items);
  for (int v = 0; v < n_items; ++v)
    for (int j = 0; j < n_bits; ++j) {
      if (v & (1 << j)) raw.item_attrs[v].push_back(j);
      else if (opts.complement) raw.item_attrs[v].push_back(n_bits + j);
    }
  raw.attr_facet.resize(n_attrs);
  raw.n_facets = n_bits;
  for (int j = 0; j < n_bits; ++j) {
    raw.attr_facet[j] = j;
    if (opts.complement) raw.attr_facet[n_bits + j] = j;
  }
  for (int u = 0; u < opts.n_users; ++u) {
    raw.user_names.push_back("u" + std::to_string(u));
    // fixed preference pattern: chosen bits with chosen values
    std::vector<int> bits(n_bits);
    std::iota(bits.begin(), bits.end(), 0);
    rng.shuffle(bits);
    int k = std::min(opts.pattern_bits, n_bits);
    std::vector<std::pair<int, int>> pattern;
    for (int i = 0; i < k; ++i) pattern.emplace_back(bits[i], rng.uniform_int(2));
    std::vector<int> eligible;
    for (int v = 0; v < n_items; ++v) {
      bool ok = true;
      for (auto [bit, val] : pattern)
        if (((v >> bit) & 1) != val) ok = false;
      if (ok) eligible.push_back(v);
    }
    rng.shuffle(eligible);
    int take = std::min<int>(opts.per_user, static_cast<int>(eligible.size()));
    std::vector<std::pair<long long, int>> seq;
    for (int i = 0; i < take; ++i) seq.emplace_back(i, eligible[i]);
    raw.inter.push_back(std::move(seq));
  }
  return detail::finalize(std::move(raw), opts.r_train, opts.r_valid, 0, rng);
}

// --- Persistence: meta.json + vocab.json + split/attr/facet TSVs in a directory ---

inline void save_dataset(const Dataset& d, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json meta{{"format", "kgcrs-dataset"},
                      {"version", 1},
                      {"n_users", d.n_users()},
                      {"n_items", d.n_items()},
                      {"n_attrs", d.n_attrs()},
                      {"n_facets", d.n_facets},
                      {"fingerprint", d.fingerprint}};
  std::ofstream(dir + "/meta.json") << meta.dump(2) << "\n";
  nlohmann::json vocab{{"users", d.user_names}, {"items", d.item_names}, {"attrs", d.attr_names}};
  std::ofstream(dir + "/vocab.json") << vocab.dump(2) << "\n";
  auto dump_split = [&](const std::string& name, const std::vector<std::vector<int>>& split) {
    std::ofstream os(dir + "/" + name + ".tsv");
    for (std::size_t u = 0; u < split.size(); ++u)
      for (int v : split[u]) os << d.user_names[u] << '\t' << d.item_names[v] << '\n';
  };
  dump_split("train", d.train);
  dump_split("valid", d.valid);
  dump_split("test", d.test);
  {
    std::ofstream os(dir + "/item_attrs.tsv");
    for (int v = 0; v < d.n_items(); ++v)
      for (int a : d.item_attrs[v]) os << d.item_names[v] << '\t' << d.attr_names[a] << '\n';
  }
  {
    std::ofstream os(dir + "/facets.tsv");
    for (int a = 0; a < d.n_attrs(); ++a) os << d.attr_names[a] << '\t' << d.attr_facet[a] << '\n';
  }
}

inline Dataset load_dataset(const std::string& dir) {
  std::ifstream meta_in(dir + "/meta.json");
  require(meta_in.good(), Err::ParseError, "cannot open " + dir + "/meta.json");
  nlohmann::json meta = nlohmann::json::parse(meta_in, nullptr, false);
  require(!meta.is_discarded() && meta.value("format", "") == "kgcrs-dataset", Err::ParseError,
          "bad dataset meta in " + dir);
  std::ifstream vocab_in(dir + "/vocab.json");
  require(vocab_in.good(), Err::ParseError, "cannot open " + dir + "/vocab.json");
  nlohmann::json vocab = nlohmann::json::parse(vocab_in, nullptr, false);
  require(!vocab.is_discarded(), Err::ParseError, "bad vocab in " + dir);

  Dataset d;
  d.user_names = vocab.at("users").get<std::vector<std::string>>();
  d.item_names = vocab.at("items").get<std::vector<std::string>>();
  d.attr_names = vocab.at("attrs").get<std::vector<std::string>>();
  std::map<std::string, int> umap, vmap, pmap;
  for (int i = 0; i < d.n_users(); ++i) umap[d.user_names[i]] = i;
  for (int i = 0; i < d.n_items(); ++i) vmap[d.item_names[i]] = i;
  for (int i = 0; i < d.n_attrs(); ++i) pmap[d.attr_names[i]] = i;

  auto lookup = [](const std::map<std::string, int>& m, const std::string& k,
                   const std::string& what) {
    auto it = m.find(k);
    require(it != m.end(), Err::ParseError, "unknown " + what + " '" + k + "'");
    return it->second;
  };
  auto load_split = [&](const std::string& name) {
    std::vector<std::vector<int>> split(d.n_users());
    for (const auto& row : detail::read_tsv(dir + "/" + name + ".tsv", 2, 2))
      split[lookup(umap, row[0], "user")].push_back(lookup(vmap, row[1], "item"));
    return split;
  };
  d.train = load_split("train");
  d.valid = load_split("valid");
  d.test = load_split("test");
  d.item_attrs.resize(d.n_items());
  for (const auto& row : detail::read_tsv(dir + "/item_attrs.tsv", 2, 2))
    d.item_attrs[lookup(vmap, row[0], "item")].push_back(lookup(pmap, row[1], "attr"));
  for (auto& v : d.item_attrs) std::sort(v.begin(), v.end());
  d.attr_facet.assign(d.n_attrs(), -1);
  d.n_facets = meta.value("n_facets", 0);
  for (const auto& row : detail::read_tsv(dir + "/facets.tsv", 2, 2)) {
    int f = -1;
    try {
      f = std::stoi(row[1]);
    } catch (...) {
      fail(Err::ParseError, "bad facet id '" + row[1] + "'");
    }
    d.attr_facet[lookup(pmap, row[0], "attr")] = f;
  }
  for (int f : d.attr_facet) require(f >= 0 && f < d.n_facets, Err::ParseError, "bad facet map");

  std::vector<Triple> triples;
  for (int u = 0; u < d.n_users(); ++u)
    for (int v : d.train[u]) triples.push_back({user_id(u), Relation::UserItem, item_id(v)});
  for (int v = 0; v < d.n_items(); ++v)
    for (int a : d.item_attrs[v]) triples.push_back({item_id(v), Relation::ItemAttr, attr_id(a)});
  for (int u = 0; u < d.n_users(); ++u) {
    std::vector<int> prefs;
    for (int v : d.train[u])
      for (int a : d.item_attrs[v]) prefs.push_back(a);
    std::sort(prefs.begin(), prefs.end());
    prefs.erase(std::unique(prefs.begin(), prefs.end()), prefs.end());
    for (int a : prefs) triples.push_back({user_id(u), Relation::UserAttr, attr_id(a)});
  }
  d.graph = KnowledgeGraph::build({d.n_users(), d.n_items(), d.n_attrs()}, std::move(triples));
  d.fingerprint = detail::hash_dataset(d);
  require(!meta.contains("fingerprint") ||
              meta["fingerprint"].get<std::uint64_t>() == d.fingerprint,
          Err::CheckpointMismatch, "dataset fingerprint mismatch in " + dir);
  return d;
}

}  // namespace kgcrs
