#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ctrlbench/net.hpp"
#include "ctrlbench/util.hpp"

namespace ctrlbench::neat {

enum class NodeKind { kInput, kBias, kHidden, kOutput };

inline const char* node_kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::kInput: return "input";
    case NodeKind::kBias: return "bias";
    case NodeKind::kHidden: return "hidden";
    case NodeKind::kOutput: return "output";
  }
  return "?";
}

struct NodeGene {
  int id = 0;
  NodeKind kind = NodeKind::kHidden;
};

struct ConnectionGene {
  int in_id = 0;
  int out_id = 0;
  double weight = 0.0;
  bool enabled = true;
  long long innovation = 0;
};

struct Genome {
  std::vector<NodeGene> nodes;              // sorted by id
  std::vector<ConnectionGene> connections;  // sorted by innovation
  double fitness = 0.0;

  bool has_node(int id) const {
    for (const auto& n : nodes)
      if (n.id == id) return true;
    return false;
  }

  const NodeGene* find_node(int id) const {
    for (const auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  }

  bool has_connection(int in_id, int out_id) const {
    for (const auto& c : connections)
      if (c.in_id == in_id && c.out_id == out_id) return true;
    return false;
  }

  void sort_genes() {
    std::sort(nodes.begin(), nodes.end(),
              [](const NodeGene& a, const NodeGene& b) { return a.id < b.id; });
    std::sort(connections.begin(), connections.end(),
              [](const ConnectionGene& a, const ConnectionGene& b) {
                return a.innovation < b.innovation;
              });
  }
};

// Global historical markings for one run. Equal structural mutation yields
// an equal innovation number (and, for node splits, an equal node id), so
// crossover can align genes without topological analysis. Registrations are
// serialized; numbers strictly increase.
class InnovationRegistry {
 public:
  explicit InnovationRegistry(int first_hidden_node_id)
      : next_node_id_(first_hidden_node_id) {}

  long long connection(int in_id, int out_id) {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_pair(in_id, out_id);
    auto it = connections_.find(key);
    if (it != connections_.end()) return it->second;
    long long innov = next_innovation_++;
    connections_.emplace(key, innov);
    return innov;
  }

  struct SplitResult {
    int node_id;
    long long in_innovation;   // in_id -> node_id
    long long out_innovation;  // node_id -> out_id
  };

  SplitResult split(int in_id, int out_id) {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_pair(in_id, out_id);
    auto it = splits_.find(key);
    if (it != splits_.end()) return it->second;
    SplitResult r;
    r.node_id = next_node_id_++;
    r.in_innovation = next_innovation_++;
    r.out_innovation = next_innovation_++;
    // the split edges also get recorded as connection signatures
    connections_.emplace(std::make_pair(in_id, r.node_id), r.in_innovation);
    connections_.emplace(std::make_pair(r.node_id, out_id), r.out_innovation);
    splits_.emplace(key, r);
    return r;
  }

  long long peak_innovation() const {
    std::lock_guard<std::mutex> lock(mu_);
    return next_innovation_;
  }

 private:
  mutable std::mutex mu_;
  long long next_innovation_ = 0;
  int next_node_id_ = 0;
  std::map<std::pair<int, int>, long long> connections_;
  std::map<std::pair<int, int>, SplitResult> splits_;
};

// Node id layout: inputs 0..I-1, bias I, outputs I+1..I+O, hidden ids from
// I+O+1 upward (handed out by the registry).
struct GenomeLayout {
  int num_inputs = 1;
  int num_outputs = 1;

  int bias_id() const { return num_inputs; }
  int output_id(int k) const { return num_inputs + 1 + k; }
  int first_hidden_id() const { return num_inputs + 1 + num_outputs; }
};

struct NeatConfig {
  int population = 150;
  double c1 = 1.0;                    // excess coefficient
  double c2 = 1.0;                    // disjoint coefficient
  double c3 = 0.4;                    // weight-difference coefficient
  double compatibility_threshold = 3.0;
  double survival_fraction = 0.2;     // eligible parents per species
  int stagnation_limit = 15;
  int elitism_min_size = 5;
  double weight_mutate_rate = 0.8;
  double weight_reset_prob = 0.1;
  double weight_perturb_sigma = 0.5;
  double add_connection_prob = 0.05;
  double add_node_prob = 0.03;
  double disabled_inherit_prob = 0.75;
  double crossover_prob = 0.75;
};

// Minimal starting structure: inputs + bias feed one hidden unit which
// feeds every output. Weights ~ N(0, 1).
inline Genome initial_genome(const GenomeLayout& layout, Rng& rng,
                             InnovationRegistry& registry) {
  Genome g;
  for (int i = 0; i < layout.num_inputs; ++i)
    g.nodes.push_back({i, NodeKind::kInput});
  g.nodes.push_back({layout.bias_id(), NodeKind::kBias});
  for (int k = 0; k < layout.num_outputs; ++k)
    g.nodes.push_back({layout.output_id(k), NodeKind::kOutput});
  int hidden = layout.first_hidden_id();
  g.nodes.push_back({hidden, NodeKind::kHidden});
  auto add = [&](int in, int out) {
    g.connections.push_back(
        {in, out, gaussian(rng), true, registry.connection(in, out)});
  };
  for (int i = 0; i < layout.num_inputs; ++i) add(i, hidden);
  add(layout.bias_id(), hidden);
  for (int k = 0; k < layout.num_outputs; ++k) add(hidden, layout.output_id(k));
  g.sort_genes();
  return g;
}

// Cycle check over the full connection set (enabled or not). Structural
// operators keep this false; activation relies on it.
inline bool has_cycle(const Genome& g) {
  std::map<int, std::vector<int>> adj;
  std::map<int, int> indeg;
  for (const auto& n : g.nodes) indeg[n.id] = 0;
  for (const auto& c : g.connections) {
    adj[c.in_id].push_back(c.out_id);
    indeg[c.out_id] += 1;
  }
  std::vector<int> queue;
  for (const auto& [id, d] : indeg)
    if (d == 0) queue.push_back(id);
  std::size_t visited = 0;
  while (!queue.empty()) {
    int id = queue.back();
    queue.pop_back();
    ++visited;
    for (int next : adj[id])
      if (--indeg[next] == 0) queue.push_back(next);
  }
  return visited != indeg.size();
}

// Compiled feedforward evaluator for a genome. Hidden nodes apply tanh;
// output sums are squashed by tanh and mapped affinely onto
// [action_low, action_high]. Dangling outputs emit the midpoint.
class Network {
 public:
  Network(const Genome& g, Vec action_low, Vec action_high)
      : low_(std::move(action_low)), high_(std::move(action_high)) {
    int slot = 0;
    for (const auto& n : g.nodes) {
      slots_[n.id] = slot++;
      kinds_.push_back(n.kind);
      if (n.kind == NodeKind::kInput) input_slots_.push_back(slots_[n.id]);
      if (n.kind == NodeKind::kOutput) output_slots_.push_back(slots_[n.id]);
    }
    incoming_.resize(g.nodes.size());
    std::vector<int> indeg(g.nodes.size(), 0);
    std::vector<std::vector<int>> adj(g.nodes.size());
    for (const auto& c : g.connections) {
      int from = slots_.at(c.in_id);
      int to = slots_.at(c.out_id);
      adj[from].push_back(to);
      indeg[to] += 1;
      if (c.enabled) incoming_[to].push_back({from, c.weight});
    }
    std::vector<int> queue;
    for (int i = 0; i < static_cast<int>(indeg.size()); ++i)
      if (indeg[i] == 0) queue.push_back(i);
    while (!queue.empty()) {
      int at = queue.back();
      queue.pop_back();
      order_.push_back(at);
      for (int next : adj[at])
        if (--indeg[next] == 0) queue.push_back(next);
    }
    if (order_.size() != g.nodes.size())
      throw std::logic_error("neat::Network: genome contains a cycle");
  }

  Vec activate(const Vec& x) const {
    if (x.size() != static_cast<Eigen::Index>(input_slots_.size()))
      throw std::invalid_argument("neat::Network: input size mismatch");
    std::vector<double> value(kinds_.size(), 0.0);
    for (std::size_t i = 0; i < input_slots_.size(); ++i)
      value[input_slots_[i]] = x(static_cast<Eigen::Index>(i));
    for (int at : order_) {
      if (kinds_[at] == NodeKind::kInput) continue;
      if (kinds_[at] == NodeKind::kBias) {
        value[at] = 1.0;
        continue;
      }
      double sum = 0.0;
      for (const auto& [from, w] : incoming_[at]) sum += w * value[from];
      value[at] = (kinds_[at] == NodeKind::kHidden) ? std::tanh(sum) : sum;
    }
    Vec out(static_cast<Eigen::Index>(output_slots_.size()));
    for (std::size_t k = 0; k < output_slots_.size(); ++k) {
      double squashed = std::tanh(value[output_slots_[k]]);
      out(static_cast<Eigen::Index>(k)) =
          low_(k) + 0.5 * (squashed + 1.0) * (high_(k) - low_(k));
    }
    return out;
  }

 private:
  Vec low_, high_;
  std::map<int, int> slots_;
  std::vector<NodeKind> kinds_;
  std::vector<int> input_slots_, output_slots_;
  std::vector<std::vector<std::pair<int, double>>> incoming_;
  std::vector<int> order_;
};

inline Vec activate(const Genome& g, const Vec& x, const Vec& low,
                    const Vec& high) {
  return Network(g, low, high).activate(x);
}

namespace detail {

// True if adding in->out would create a cycle, considering every existing
// connection regardless of enable state.
inline bool would_create_cycle(const Genome& g, int in_id, int out_id) {
  if (in_id == out_id) return true;
  // cycle iff in_id is reachable from out_id
  std::map<int, std::vector<int>> adj;
  for (const auto& c : g.connections) adj[c.in_id].push_back(c.out_id);
  std::vector<int> stack{out_id};
  std::set<int> seen{out_id};
  while (!stack.empty()) {
    int at = stack.back();
    stack.pop_back();
    if (at == in_id) return true;
    for (int next : adj[at])
      if (seen.insert(next).second) stack.push_back(next);
  }
  return false;
}

}  // namespace detail

// Structural and weight mutation. Weight pass (rate 0.8): each connection
// perturbed by N(0, 0.5), 10% fully reset. Add-connection (0.05) considers
// only acyclic candidates; add-node (0.03) splits an enabled connection,
// disabling it and wiring in-weight 1 / out-weight equal to the old weight.
inline Genome mutate(const Genome& genome, const NeatConfig& cfg, Rng& rng,
                     InnovationRegistry& registry) {
  Genome g = genome;

  if (uniform(rng, 0.0, 1.0) < cfg.weight_mutate_rate) {
    for (auto& c : g.connections) {
      if (uniform(rng, 0.0, 1.0) < cfg.weight_reset_prob)
        c.weight = gaussian(rng);
      else
        c.weight += cfg.weight_perturb_sigma * gaussian(rng);
    }
  }

  if (uniform(rng, 0.0, 1.0) < cfg.add_connection_prob) {
    std::vector<std::pair<int, int>> candidates;
    for (const auto& src : g.nodes) {
      if (src.kind == NodeKind::kOutput) continue;
      for (const auto& dst : g.nodes) {
        if (dst.kind != NodeKind::kHidden && dst.kind != NodeKind::kOutput)
          continue;
        if (src.id == dst.id) continue;
        if (g.has_connection(src.id, dst.id)) continue;
        if (detail::would_create_cycle(g, src.id, dst.id)) continue;
        candidates.emplace_back(src.id, dst.id);
      }
    }
    if (!candidates.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      auto [in_id, out_id] = candidates[pick(rng)];
      g.connections.push_back({in_id, out_id, gaussian(rng), true,
                               registry.connection(in_id, out_id)});
    }
  }

  if (uniform(rng, 0.0, 1.0) < cfg.add_node_prob) {
    std::vector<std::size_t> enabled;
    for (std::size_t i = 0; i < g.connections.size(); ++i)
      if (g.connections[i].enabled) enabled.push_back(i);
    if (!enabled.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, enabled.size() - 1);
      ConnectionGene& old = g.connections[enabled[pick(rng)]];
      auto split = registry.split(old.in_id, old.out_id);
      if (!g.has_node(split.node_id)) {
        old.enabled = false;
        g.nodes.push_back({split.node_id, NodeKind::kHidden});
        g.connections.push_back(
            {old.in_id, split.node_id, 1.0, true, split.in_innovation});
        g.connections.push_back(
            {split.node_id, old.out_id, old.weight, true, split.out_innovation});
      }
    }
  }

  g.sort_genes();
  return g;
}

// Historical-marking crossover. The caller passes the fitter parent first:
// matching genes come from either parent at random, disjoint and excess
// genes from the fitter one. A gene disabled in either parent stays
// disabled with probability 0.75.
inline Genome crossover(const Genome& fitter, const Genome& other,
                        const NeatConfig& cfg, Rng& rng) {
  std::map<long long, const ConnectionGene*> other_by_innov;
  for (const auto& c : other.connections) other_by_innov[c.innovation] = &c;

  Genome child;
  child.nodes = fitter.nodes;
  for (const auto& gene : fitter.connections) {
    auto it = other_by_innov.find(gene.innovation);
    ConnectionGene inherited;
    bool disabled_somewhere;
    if (it != other_by_innov.end()) {
      inherited = (uniform(rng, 0.0, 1.0) < 0.5) ? gene : *it->second;
      disabled_somewhere = !gene.enabled || !it->second->enabled;
    } else {
      inherited = gene;
      disabled_somewhere = !gene.enabled;
    }
    inherited.enabled =
        disabled_somewhere ? !(uniform(rng, 0.0, 1.0) < cfg.disabled_inherit_prob)
                           : true;
    child.connections.push_back(inherited);
  }
  child.sort_genes();
  return child;
}

// delta = c1*E/N + c2*D/N + c3*Wbar, with N = max gene count (1 when both
// genomes carry fewer than 20 genes).
inline double compatibility(const Genome& a, const Genome& b,
                            const NeatConfig& cfg) {
  std::map<long long, const ConnectionGene*> b_by_innov;
  std::set<long long> a_innovations;
  long long a_max = -1, b_max = -1;
  for (const auto& c : a.connections) {
    a_innovations.insert(c.innovation);
    a_max = std::max(a_max, c.innovation);
  }
  for (const auto& c : b.connections) {
    b_by_innov[c.innovation] = &c;
    b_max = std::max(b_max, c.innovation);
  }
  int matching = 0, disjoint = 0, excess = 0;
  double weight_diff = 0.0;
  for (const auto& c : a.connections) {
    auto it = b_by_innov.find(c.innovation);
    if (it != b_by_innov.end()) {
      ++matching;
      weight_diff += std::abs(c.weight - it->second->weight);
    } else {
      (c.innovation > b_max ? excess : disjoint) += 1;
    }
  }
  for (const auto& c : b.connections) {
    if (a_innovations.count(c.innovation)) continue;
    (c.innovation > a_max ? excess : disjoint) += 1;
  }
  double n = static_cast<double>(
      std::max(a.connections.size(), b.connections.size()));
  if (a.connections.size() < 20 && b.connections.size() < 20) n = 1.0;
  if (n < 1.0) n = 1.0;
  double wbar = matching > 0 ? weight_diff / matching : 0.0;
  return cfg.c1 * excess / n + cfg.c2 * disjoint / n + cfg.c3 * wbar;
}

using GenomeEval =
    std::function<std::vector<double>(const std::vector<Genome>&)>;

// Speciated population with fitness sharing, per-species elitism and
// stagnation removal. Offspring counts use largest-remainder rounding so
// the population size is conserved exactly.
class Population {
 public:
  Population(const GenomeLayout& layout, const NeatConfig& cfg,
             std::uint64_t seed)
      : layout_(layout),
        cfg_(cfg),
        registry_(layout.first_hidden_id() + 1),
        rng_(derive_seed(seed, stream_id("neat"))) {
    if (cfg.population < 1)
      throw std::invalid_argument("neat::Population: population must be >= 1");
    genomes_.reserve(cfg.population);
    for (int i = 0; i < cfg.population; ++i)
      genomes_.push_back(initial_genome(layout_, rng_, registry_));
    best_ever_ = genomes_.front();
    best_ever_.fitness = -std::numeric_limits<double>::infinity();
  }

  const std::vector<Genome>& genomes() const { return genomes_; }
  const Genome& best_ever() const { return best_ever_; }
  const Genome& generation_best() const { return generation_best_; }
  InnovationRegistry& registry() { return registry_; }
  long long generation() const { return generation_; }
  std::size_t species_count() const { return species_.size(); }

  // One full generation: evaluate, speciate, share fitness, allocate
  // offspring, reproduce.
  void evolve_generation(const GenomeEval& eval) {
    std::vector<double> fitness = eval(genomes_);
    if (fitness.size() != genomes_.size())
      throw std::runtime_error("neat: evaluator returned wrong count");
    for (std::size_t i = 0; i < genomes_.size(); ++i)
      genomes_[i].fitness = fitness[i];

    int champ = 0;
    for (std::size_t i = 1; i < genomes_.size(); ++i)
      if (genomes_[i].fitness > genomes_[champ].fitness)
        champ = static_cast<int>(i);
    generation_best_ = genomes_[champ];
    if (generation_best_.fitness > best_ever_.fitness)
      best_ever_ = generation_best_;

    speciate();
    update_stagnation();
    remove_stagnant(champ);
    if (species_.empty()) {
      reseed_from_best();
      ++generation_;
      return;
    }
    std::vector<int> allocation = allocate_offspring(champ);
    reproduce(allocation, champ);
    ++generation_;
  }

 private:
  struct Species {
    long long id = 0;
    Genome representative;
    std::vector<int> members;  // indices into genomes_
    double best_fitness = -std::numeric_limits<double>::infinity();
    int stagnation = 0;
  };

  void speciate() {
    for (auto& s : species_) s.members.clear();
    for (std::size_t i = 0; i < genomes_.size(); ++i) {
      bool placed = false;
      for (auto& s : species_) {
        if (compatibility(genomes_[i], s.representative, cfg_) <
            cfg_.compatibility_threshold) {
          s.members.push_back(static_cast<int>(i));
          placed = true;
          break;
        }
      }
      if (!placed) {
        Species s;
        s.id = next_species_id_++;
        s.representative = genomes_[i];
        s.members.push_back(static_cast<int>(i));
        species_.push_back(std::move(s));
      }
    }
    std::erase_if(species_, [](const Species& s) { return s.members.empty(); });
    // fresh representative for the next generation's matching
    for (auto& s : species_) {
      std::uniform_int_distribution<std::size_t> pick(0, s.members.size() - 1);
      s.representative = genomes_[s.members[pick(rng_)]];
    }
  }

  void update_stagnation() {
    for (auto& s : species_) {
      double best = -std::numeric_limits<double>::infinity();
      for (int idx : s.members) best = std::max(best, genomes_[idx].fitness);
      if (best > s.best_fitness) {
        s.best_fitness = best;
        s.stagnation = 0;
      } else {
        s.stagnation += 1;
      }
    }
  }

  bool species_holds(const Species& s, int genome_index) const {
    return std::find(s.members.begin(), s.members.end(), genome_index) !=
           s.members.end();
  }

  void remove_stagnant(int champ) {
    std::erase_if(species_, [&](const Species& s) {
      return s.stagnation >= cfg_.stagnation_limit && !species_holds(s, champ);
    });
  }

  // Offspring proportional to each species' adjusted-fitness mass. Raw
  // fitness is shifted by the generation minimum so negative returns keep a
  // meaningful proportion; sharing divides by species size.
  std::vector<int> allocate_offspring(int champ) {
    double min_fit = std::numeric_limits<double>::infinity();
    for (const auto& s : species_)
      for (int idx : s.members) min_fit = std::min(min_fit, genomes_[idx].fitness);

    std::vector<double> mass(species_.size(), 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < species_.size(); ++k) {
      double sum = 0.0;
      for (int idx : species_[k].members)
        sum += (genomes_[idx].fitness - min_fit);
      mass[k] = sum / static_cast<double>(species_[k].members.size());
      total += mass[k];
    }

    const int pop = cfg_.population;
    std::vector<int> alloc(species_.size(), 0);
    std::vector<double> quota(species_.size(), 0.0);
    if (total <= 0.0) {
      for (std::size_t k = 0; k < species_.size(); ++k)
        quota[k] = static_cast<double>(pop) / species_.size();
    } else {
      for (std::size_t k = 0; k < species_.size(); ++k)
        quota[k] = pop * mass[k] / total;
    }
    int assigned = 0;
    for (std::size_t k = 0; k < species_.size(); ++k) {
      alloc[k] = static_cast<int>(std::floor(quota[k]));
      assigned += alloc[k];
    }
    std::vector<std::size_t> by_remainder(species_.size());
    for (std::size_t k = 0; k < species_.size(); ++k) by_remainder[k] = k;
    std::sort(by_remainder.begin(), by_remainder.end(),
              [&](std::size_t a, std::size_t b) {
                double ra = quota[a] - std::floor(quota[a]);
                double rb = quota[b] - std::floor(quota[b]);
                if (ra != rb) return ra > rb;
                return species_[a].id < species_[b].id;
              });
    for (std::size_t i = 0; assigned < pop; ++i) {
      alloc[by_remainder[i % species_.size()]] += 1;
      ++assigned;
    }
    // the champion's species must survive
    for (std::size_t k = 0; k < species_.size(); ++k) {
      if (species_holds(species_[k], champ) && alloc[k] == 0) {
        std::size_t largest = 0;
        for (std::size_t j = 1; j < species_.size(); ++j)
          if (alloc[j] > alloc[largest]) largest = j;
        alloc[largest] -= 1;
        alloc[k] += 1;
      }
    }
    return alloc;
  }

  void reproduce(const std::vector<int>& allocation, int champ) {
    std::vector<Genome> next;
    next.reserve(cfg_.population);
    for (std::size_t k = 0; k < species_.size(); ++k) {
      if (allocation[k] == 0) continue;
      std::vector<int> members = species_[k].members;
      std::sort(members.begin(), members.end(), [&](int a, int b) {
        if (genomes_[a].fitness != genomes_[b].fitness)
          return genomes_[a].fitness > genomes_[b].fitness;
        return a < b;
      });
      int slots = allocation[k];
      bool has_champ = species_holds(species_[k], champ);
      bool elite = static_cast<int>(members.size()) >= cfg_.elitism_min_size ||
                   has_champ;
      if (elite && slots > 0) {
        int keep = has_champ ? champ : members.front();
        next.push_back(genomes_[keep]);
        --slots;
      }
      int eligible = std::max(
          1, static_cast<int>(std::ceil(cfg_.survival_fraction *
                                        static_cast<double>(members.size()))));
      eligible = std::min<int>(eligible, static_cast<int>(members.size()));
      std::uniform_int_distribution<int> pick(0, eligible - 1);
      for (int s = 0; s < slots; ++s) {
        Genome child;
        if (uniform(rng_, 0.0, 1.0) < cfg_.crossover_prob && eligible >= 2) {
          int i = pick(rng_);
          int j = pick(rng_);
          if (i == j) {
            child = genomes_[members[i]];
          } else {
            int fitter = std::min(i, j);  // members sorted by fitness desc
            int other = std::max(i, j);
            child = crossover(genomes_[members[fitter]],
                              genomes_[members[other]], cfg_, rng_);
          }
        } else {
          child = genomes_[members[pick(rng_)]];
        }
        next.push_back(mutate(child, cfg_, rng_, registry_));
      }
    }
    genomes_ = std::move(next);
  }

  void reseed_from_best() {
    std::vector<Genome> next;
    next.reserve(cfg_.population);
    next.push_back(best_ever_);
    while (static_cast<int>(next.size()) < cfg_.population)
      next.push_back(mutate(best_ever_, cfg_, rng_, registry_));
    genomes_ = std::move(next);
    species_.clear();
  }

  GenomeLayout layout_;
  NeatConfig cfg_;
  InnovationRegistry registry_;
  Rng rng_;
  std::vector<Genome> genomes_;
  std::vector<Species> species_;
  Genome best_ever_;
  Genome generation_best_;
  long long generation_ = 0;
  long long next_species_id_ = 0;
};

// Line-oriented genome text format used for checkpointing best individuals.
inline void write_genome(std::ostream& os, const Genome& g) {
  os << "genome v1\n";
  os << "nodes " << g.nodes.size() << "\n";
  for (const auto& n : g.nodes)
    os << n.id << " " << node_kind_name(n.kind) << "\n";
  os << "connections " << g.connections.size() << "\n";
  char buf[64];
  for (const auto& c : g.connections) {
    std::snprintf(buf, sizeof buf, "%.17g", c.weight);
    os << c.innovation << " " << c.in_id << " " << c.out_id << " " << buf
       << " " << (c.enabled ? 1 : 0) << "\n";
  }
  os << "end\n";
}

inline std::string genome_to_string(const Genome& g) {
  std::ostringstream os;
  write_genome(os, g);
  return os.str();
}

inline Genome read_genome(std::istream& is) {
  auto fail = [](const std::string& what) -> Genome {
    throw std::runtime_error("read_genome: " + what);
  };
  std::string word, version;
  is >> word >> version;
  if (word != "genome" || version != "v1") return fail("bad header");
  Genome g;
  std::size_t count = 0;
  is >> word >> count;
  if (word != "nodes") return fail("expected node section");
  for (std::size_t i = 0; i < count; ++i) {
    NodeGene n;
    std::string kind;
    if (!(is >> n.id >> kind)) return fail("truncated node list");
    if (kind == "input") n.kind = NodeKind::kInput;
    else if (kind == "bias") n.kind = NodeKind::kBias;
    else if (kind == "hidden") n.kind = NodeKind::kHidden;
    else if (kind == "output") n.kind = NodeKind::kOutput;
    else return fail("unknown node kind: " + kind);
    g.nodes.push_back(n);
  }
  is >> word >> count;
  if (word != "connections") return fail("expected connection section");
  for (std::size_t i = 0; i < count; ++i) {
    ConnectionGene c;
    int enabled = 0;
    if (!(is >> c.innovation >> c.in_id >> c.out_id >> c.weight >> enabled))
      return fail("truncated connection list");
    c.enabled = enabled != 0;
    g.connections.push_back(c);
  }
  is >> word;
  if (word != "end") return fail("missing end marker");
  g.sort_genes();
  return g;
}

inline Genome genome_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_genome(is);
}

}  // namespace ctrlbench::neat
