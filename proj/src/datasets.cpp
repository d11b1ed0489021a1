#include "wscl/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace wscl::data {

namespace {

/// Flat index over (trajectory, time) positions.
struct ItemIndex {
  std::vector<std::pair<std::size_t, std::size_t>> items;

  static ItemIndex build(const TrajectorySet& set, bool need_action) {
    ItemIndex idx;
    for (std::size_t t = 0; t < set.trajs.size(); ++t) {
      const std::size_t n =
          need_action ? set.trajs[t].actions.size() : set.trajs[t].states.size();
      for (std::size_t i = 0; i < n; ++i) idx.items.emplace_back(t, i);
    }
    return idx;
  }
};

double dist2(const core::Vec& a, const core::Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::size_t TrajectorySet::total_steps() const {
  std::size_t n = 0;
  for (const auto& t : trajs) n += t.actions.size();
  return n;
}

TrajectorySet collect_demos(const envs::MdpPair& pair, int agent, const core::Vec& ladder,
                            std::size_t per_rung, std::size_t horizon, std::uint64_t seed) {
  if (ladder.empty()) throw core::InputError("collect_demos: empty quality ladder");
  const envs::MdpSpec& spec = agent == 1 ? pair.m1 : pair.m2;
  TrajectorySet set;
  set.agent = agent;
  set.state_dim = spec.state_dim;
  set.action_dim = spec.action_dim;
  core::Rng base = core::Rng(seed).split("demos/agent" + std::to_string(agent));
  for (std::size_t r = 0; r < ladder.size(); ++r) {
    for (std::size_t j = 0; j < per_rung; ++j) {
      core::Rng traj_rng = base.split(r * 100003 + j);
      envs::Policy policy = envs::scripted_policy(pair, agent, ladder[r], traj_rng.next_u64());
      core::Vec s0 = spec.init_state(traj_rng);
      set.trajs.push_back(envs::rollout(spec, policy, s0, horizon));
    }
  }
  return set;
}

TrajectorySet confidence_labels(TrajectorySet set) {
  if (set.trajs.size() < 2) throw core::InputError("confidence_labels: need at least 2 trajectories");
  double lo = set.trajs[0].ret, hi = set.trajs[0].ret;
  for (const auto& t : set.trajs) {
    lo = std::min(lo, t.ret);
    hi = std::max(hi, t.ret);
  }
  if (hi - lo <= 0.0)
    throw core::InputError("confidence_labels: degenerate return range (all returns equal)");
  set.confidence.resize(set.trajs.size());
  for (std::size_t i = 0; i < set.trajs.size(); ++i)
    set.confidence[i] = (set.trajs[i].ret - lo) / (hi - lo);
  return set;
}

AbstractionPairSet make_abstraction_pairs(const envs::MdpPair& pair, const TrajectorySet& set1,
                                          const TrajectorySet& set2, char kind, std::size_t k,
                                          const PairGenOptions& opt) {
  if (kind != 's' && kind != 'a') throw core::InputError("make_abstraction_pairs: kind must be s|a");
  const bool need_action = kind == 'a';
  if (pair.confidence_abstraction && (!set1.has_confidence() || !set2.has_confidence()))
    throw core::InputError("make_abstraction_pairs: confidence abstraction requires labeled sets");

  ItemIndex idx1 = ItemIndex::build(set1, need_action);
  ItemIndex idx2 = ItemIndex::build(set2, need_action);
  if (idx1.items.empty() || idx2.items.empty())
    throw core::InputError("make_abstraction_pairs: empty demonstration set");

  auto abstraction_of = [&](const TrajectorySet& set, int which,
                            const std::pair<std::size_t, std::size_t>& it) -> core::Vec {
    const envs::Trajectory& tr = set.trajs[it.first];
    if (pair.confidence_abstraction) return {set.confidence[it.first]};
    if (kind == 's')
      return which == 1 ? pair.alpha_state_1(tr.states[it.second])
                        : pair.alpha_state_2(tr.states[it.second]);
    return which == 1 ? pair.alpha_action_1(tr.states[it.second], tr.actions[it.second])
                      : pair.alpha_action_2(tr.states[it.second], tr.actions[it.second]);
  };

  // Precompute abstraction values; diameter of the realized values sets the
  // absolute bandwidth and threshold.
  std::vector<core::Vec> abs1(idx1.items.size()), abs2(idx2.items.size());
  for (std::size_t i = 0; i < idx1.items.size(); ++i) abs1[i] = abstraction_of(set1, 1, idx1.items[i]);
  for (std::size_t i = 0; i < idx2.items.size(); ++i) abs2[i] = abstraction_of(set2, 2, idx2.items[i]);

  const std::size_t adim = abs1[0].size();
  core::Vec lo(adim, 1e300), hi(adim, -1e300);
  for (const auto* va : {&abs1, &abs2}) {
    for (const auto& v : *va)
      for (std::size_t d = 0; d < adim; ++d) {
        lo[d] = std::min(lo[d], v[d]);
        hi[d] = std::max(hi[d], v[d]);
      }
  }
  double diam2 = 0.0;
  for (std::size_t d = 0; d < adim; ++d) diam2 += (hi[d] - lo[d]) * (hi[d] - lo[d]);
  const double diameter = std::sqrt(diam2);
  if (diameter <= 0.0)
    throw core::InputError("make_abstraction_pairs: degenerate abstraction values");

  AbstractionPairSet out;
  out.kind = kind;
  out.index = k;
  out.abstraction = pair.confidence_abstraction ? "confidence"
                    : (pair.name == "arm" ? (kind == 's' ? "end-effector" : "end-effector-delta")
                                          : "position");
  out.sigma = opt.sigma_frac * diameter;
  out.binary = opt.binary;
  out.threshold = opt.threshold_frac * diameter;
  out.dim_s1 = set1.state_dim;
  out.dim_a1 = need_action ? set1.action_dim : 0;
  out.dim_s2 = set2.state_dim;
  out.dim_a2 = need_action ? set2.action_dim : 0;
  out.with_replacement = opt.n > idx1.items.size() * idx2.items.size();
  if (out.with_replacement)
    core::log_info("make_abstraction_pairs: sampling with replacement (n exceeds combinations)");

  auto raw_of = [&](const TrajectorySet& set, const std::pair<std::size_t, std::size_t>& it)
      -> core::Vec {
    const envs::Trajectory& tr = set.trajs[it.first];
    core::Vec x = tr.states[it.second];
    if (need_action) {
      const core::Vec& a = tr.actions[it.second];
      x.insert(x.end(), a.begin(), a.end());
    }
    return x;
  };

  core::Rng rng = core::Rng(opt.seed).split("pairs/" + std::string(1, kind) + std::to_string(k));
  const double sigma = out.sigma;
  out.records.reserve(opt.n);
  for (std::size_t i = 0; i < opt.n; ++i) {
    const std::size_t i1 = rng.index(idx1.items.size());
    std::size_t i2 = rng.index(idx2.items.size());
    if (i % 2 == 0) {
      // Near pair: rejection-sample a close counterpart so both label
      // classes stay represented.
      std::size_t best = i2;
      double best_d = dist2(abs1[i1], abs2[i2]);
      for (int attempt = 0; attempt < 200 && best_d >= sigma * sigma; ++attempt) {
        const std::size_t cand = rng.index(idx2.items.size());
        const double d = dist2(abs1[i1], abs2[cand]);
        if (d < best_d) {
          best = cand;
          best_d = d;
        }
      }
      i2 = best;
    }
    const double d = std::sqrt(dist2(abs1[i1], abs2[i2]));
    PairRecord rec;
    rec.x1 = raw_of(set1, idx1.items[i1]);
    rec.x2 = raw_of(set2, idx2.items[i2]);
    rec.label = opt.binary ? (d <= out.threshold ? 1.0 : 0.0)
                           : std::exp(-d * d / (2.0 * sigma * sigma));
    out.records.push_back(std::move(rec));
  }
  return out;
}

SegmentBatch sample_segments(const TrajectorySet& set, std::size_t T, std::size_t batch,
                             core::Rng& rng) {
  if (T < 1) throw core::InputError("sample_segments: T must be >= 1");
  std::size_t shortest = SIZE_MAX;
  for (const auto& t : set.trajs) shortest = std::min(shortest, t.actions.size());
  if (set.trajs.empty() || T > shortest)
    throw core::InputError("sample_segments: segment length " + std::to_string(T + 1) +
                           " exceeds shortest trajectory");
  SegmentBatch out;
  out.states.assign(T + 1, core::Mat(batch, set.state_dim));
  out.actions.assign(T, core::Mat(batch, set.action_dim));
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t ti = rng.index(set.trajs.size());
    const envs::Trajectory& tr = set.trajs[ti];
    const std::size_t off = rng.index(tr.actions.size() - T + 1);
    for (std::size_t t = 0; t <= T; ++t) out.states[t].set_row(b, tr.states[off + t]);
    for (std::size_t t = 0; t < T; ++t) out.actions[t].set_row(b, tr.actions[off + t]);
  }
  return out;
}

core::Mat sample_states(const TrajectorySet& set, std::size_t batch, core::Rng& rng) {
  ItemIndex idx = ItemIndex::build(set, false);
  core::Mat out(batch, set.state_dim);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& [t, i] = idx.items[rng.index(idx.items.size())];
    out.set_row(b, set.trajs[t].states[i]);
  }
  return out;
}

StateActionBatch sample_state_actions(const TrajectorySet& set, std::size_t batch, core::Rng& rng) {
  ItemIndex idx = ItemIndex::build(set, true);
  StateActionBatch out{core::Mat(batch, set.state_dim), core::Mat(batch, set.action_dim)};
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& [t, i] = idx.items[rng.index(idx.items.size())];
    out.s.set_row(b, set.trajs[t].states[i]);
    out.a.set_row(b, set.trajs[t].actions[i]);
  }
  return out;
}

PairBatch sample_pair_batch(const AbstractionPairSet& set, std::size_t batch, core::Rng& rng) {
  if (set.records.empty()) throw core::InputError("sample_pair_batch: empty pair set");
  PairBatch out{core::Mat(batch, set.records[0].x1.size()),
                core::Mat(batch, set.records[0].x2.size()), core::Vec(batch)};
  for (std::size_t b = 0; b < batch; ++b) {
    const PairRecord& rec = set.records[rng.index(set.records.size())];
    out.x1.set_row(b, rec.x1);
    out.x2.set_row(b, rec.x2);
    out.labels[b] = rec.label;
  }
  return out;
}

PairBatch pair_batch_slice(const AbstractionPairSet& set, std::size_t begin, std::size_t end) {
  if (begin >= end || end > set.records.size())
    throw core::InputError("pair_batch_slice: bad range");
  const std::size_t n = end - begin;
  PairBatch out{core::Mat(n, set.records[begin].x1.size()),
                core::Mat(n, set.records[begin].x2.size()), core::Vec(n)};
  for (std::size_t b = 0; b < n; ++b) {
    const PairRecord& rec = set.records[begin + b];
    out.x1.set_row(b, rec.x1);
    out.x2.set_row(b, rec.x2);
    out.labels[b] = rec.label;
  }
  return out;
}

// ---------------------------------------------------------------------------
// File IO
// ---------------------------------------------------------------------------

namespace {

void write_csv_vec(std::ostream& os, const core::Vec& v) {
  for (double x : v) os << ',' << core::fmt_g17(x);
}

}  // namespace

void write_trajectories(const std::string& path, const TrajectorySet& set,
                        const std::string& config_hash) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw core::InputError("write_trajectories: cannot open '" + path + "'");
  os << "wscl-traj v1 agent=" << set.agent << " state_dim=" << set.state_dim
     << " action_dim=" << set.action_dim;
  if (!config_hash.empty()) os << " config=" << config_hash;
  os << '\n';
  for (std::size_t ti = 0; ti < set.trajs.size(); ++ti) {
    const envs::Trajectory& tr = set.trajs[ti];
    for (std::size_t t = 0; t < tr.actions.size(); ++t) {
      os << t;
      write_csv_vec(os, tr.states[t]);
      write_csv_vec(os, tr.actions[t]);
      os << '\n';
    }
    os << tr.actions.size();
    write_csv_vec(os, tr.states.back());
    os << '\n';
    os << "return=" << core::fmt_g17(tr.ret) << " confidence="
       << (set.has_confidence() ? core::fmt_g17(set.confidence[ti]) : std::string("na")) << '\n';
  }
  if (!os) throw core::InputError("write_trajectories: write failed for '" + path + "'");
}

TrajectorySet read_trajectories(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw core::InputError("read_trajectories: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw core::InputError("read_trajectories: empty file");
  std::istringstream header(line);
  std::string magic, ver;
  header >> magic >> ver;
  if (magic != "wscl-traj" || ver != "v1")
    throw core::InputError("read_trajectories: bad header '" + line + "'");
  TrajectorySet set;
  std::string kv;
  while (header >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    if (key == "agent") set.agent = std::stoi(val);
    else if (key == "state_dim") set.state_dim = std::stoul(val);
    else if (key == "action_dim") set.action_dim = std::stoul(val);
  }
  if (set.state_dim == 0) throw core::InputError("read_trajectories: missing state_dim");

  envs::Trajectory cur;
  bool any_confidence = false;
  std::vector<double> confidences;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("return=", 0) == 0) {
      std::istringstream tail(line);
      std::string tok;
      double conf = -1.0;
      while (tail >> tok) {
        const auto eq = tok.find('=');
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "return") cur.ret = core::parse_double(val);
        else if (key == "confidence" && val != "na") {
          conf = core::parse_double(val);
          any_confidence = true;
        }
      }
      confidences.push_back(conf);
      set.trajs.push_back(std::move(cur));
      cur = envs::Trajectory{};
      continue;
    }
    const auto fields = split_csv(line);
    if (fields.size() == 1 + set.state_dim) {
      core::Vec s(set.state_dim);
      for (std::size_t i = 0; i < set.state_dim; ++i) s[i] = core::parse_double(fields[1 + i]);
      cur.states.push_back(std::move(s));
    } else if (fields.size() == 1 + set.state_dim + set.action_dim) {
      core::Vec s(set.state_dim), a(set.action_dim);
      for (std::size_t i = 0; i < set.state_dim; ++i) s[i] = core::parse_double(fields[1 + i]);
      for (std::size_t i = 0; i < set.action_dim; ++i)
        a[i] = core::parse_double(fields[1 + set.state_dim + i]);
      cur.states.push_back(std::move(s));
      cur.actions.push_back(std::move(a));
    } else {
      throw core::InputError("read_trajectories: bad record width in '" + line + "'");
    }
  }
  if (!cur.states.empty())
    throw core::InputError("read_trajectories: truncated file (missing return line)");
  if (any_confidence) {
    set.confidence.assign(confidences.begin(), confidences.end());
    for (double c : set.confidence)
      if (c < 0.0) throw core::InputError("read_trajectories: mixed confidence presence");
  }
  return set;
}

void write_pairs(const std::string& path, const AbstractionPairSet& set,
                 const std::string& config_hash) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw core::InputError("write_pairs: cannot open '" + path + "'");
  os << "wscl-pairs v1 kind=" << set.kind << " k=" << set.index;
  if (!config_hash.empty()) os << " config=" << config_hash;
  os << '\n';
  os << "meta abstraction=" << set.abstraction << " sigma=" << core::fmt_g17(set.sigma)
     << " binary=" << (set.binary ? 1 : 0) << " threshold=" << core::fmt_g17(set.threshold)
     << " replacement=" << (set.with_replacement ? 1 : 0) << " dims=" << set.dim_s1 << ','
     << set.dim_a1 << ',' << set.dim_s2 << ',' << set.dim_a2 << '\n';
  for (const auto& rec : set.records) {
    bool first = true;
    for (const auto* side : {&rec.x1, &rec.x2}) {
      for (double x : *side) {
        if (!first) os << ',';
        os << core::fmt_g17(x);
        first = false;
      }
    }
    os << ',' << core::fmt_g17(rec.label) << '\n';
  }
  if (!os) throw core::InputError("write_pairs: write failed for '" + path + "'");
}

AbstractionPairSet read_pairs(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw core::InputError("read_pairs: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw core::InputError("read_pairs: empty file");
  std::istringstream header(line);
  std::string magic, ver, kv;
  header >> magic >> ver;
  if (magic != "wscl-pairs" || ver != "v1")
    throw core::InputError("read_pairs: bad header '" + line + "'");
  AbstractionPairSet set;
  while (header >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    if (key == "kind") set.kind = val.empty() ? 's' : val[0];
    else if (key == "k") set.index = std::stoul(val);
  }
  if (!std::getline(is, line) || line.rfind("meta ", 0) != 0)
    throw core::InputError("read_pairs: missing meta line");
  std::istringstream meta(line.substr(5));
  while (meta >> kv) {
    const auto eq = kv.find('=');
    const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    if (key == "abstraction") set.abstraction = val;
    else if (key == "sigma") set.sigma = core::parse_double(val);
    else if (key == "binary") set.binary = val == "1";
    else if (key == "threshold") set.threshold = core::parse_double(val);
    else if (key == "replacement") set.with_replacement = val == "1";
    else if (key == "dims") {
      const auto d = split_csv(val);
      if (d.size() != 4) throw core::InputError("read_pairs: bad dims");
      set.dim_s1 = std::stoul(d[0]);
      set.dim_a1 = std::stoul(d[1]);
      set.dim_s2 = std::stoul(d[2]);
      set.dim_a2 = std::stoul(d[3]);
    }
  }
  const std::size_t w1 = set.dim_s1 + set.dim_a1, w2 = set.dim_s2 + set.dim_a2;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != w1 + w2 + 1)
      throw core::InputError("read_pairs: bad record width in '" + line + "'");
    PairRecord rec;
    rec.x1.resize(w1);
    rec.x2.resize(w2);
    for (std::size_t i = 0; i < w1; ++i) rec.x1[i] = core::parse_double(fields[i]);
    for (std::size_t i = 0; i < w2; ++i) rec.x2[i] = core::parse_double(fields[w1 + i]);
    rec.label = core::parse_double(fields[w1 + w2]);
    set.records.push_back(std::move(rec));
  }
  return set;
}

}  // namespace wscl::data
