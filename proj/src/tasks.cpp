#include "warpadam/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>

#include "warpadam/binio.hpp"
#include "warpadam/config.hpp"
#include "warpadam/error.hpp"

namespace warpadam {

namespace {

// First k entries of a uniformly random permutation of 0..n-1.
std::vector<std::size_t> choose(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

Episode sample_episode(const ClassTable& table, const EpisodeGeometry& geometry, std::mt19937_64& rng,
                       std::span<const std::size_t> alphabet_pool) {
  if (geometry.n_way == 0 || geometry.k_shot == 0 || geometry.query_per_class == 0) {
    throw ContractError("episode geometry needs positive n_way, k_shot and query_per_class");
  }
  const std::size_t need = geometry.k_shot + geometry.query_per_class;

  std::vector<std::size_t> pool(alphabet_pool.begin(), alphabet_pool.end());
  if (pool.empty()) {
    pool.resize(table.alphabets.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
  }

  std::vector<std::size_t> candidates;
  std::vector<std::vector<std::size_t>> eligible;
  std::size_t best = 0;
  for (std::size_t a : pool) {
    if (a >= table.alphabets.size()) throw ContractError("alphabet index " + std::to_string(a) + " out of range");
    std::vector<std::size_t> ok;
    const auto& chars = table.alphabets[a].characters;
    for (std::size_t c = 0; c < chars.size(); ++c) {
      if (chars[c].instances.size() >= need) ok.push_back(c);
    }
    best = std::max(best, ok.size());
    if (ok.size() >= geometry.n_way) {
      candidates.push_back(a);
      eligible.push_back(std::move(ok));
    }
  }
  if (candidates.empty()) {
    throw SamplingError("no alphabet has " + std::to_string(geometry.n_way) + " classes with at least " +
                        std::to_string(need) + " instances (k_shot " + std::to_string(geometry.k_shot) +
                        " + query " + std::to_string(geometry.query_per_class) + "); best alphabet has " +
                        std::to_string(best));
  }

  std::uniform_int_distribution<std::size_t> pick_alphabet(0, candidates.size() - 1);
  const std::size_t slot = pick_alphabet(rng);
  const std::size_t a = candidates[slot];
  const auto& classes = eligible[slot];
  const std::vector<std::size_t> chosen = choose(classes.size(), geometry.n_way, rng);

  Episode ep;
  ep.n_way = geometry.n_way;
  ep.k_shot = geometry.k_shot;
  ep.task_id = table.alphabets[a].name + ":";
  for (std::size_t label = 0; label < chosen.size(); ++label) {
    const std::size_t c = classes[chosen[label]];
    const auto& inst = table.alphabets[a].characters[c].instances;
    if (label) ep.task_id += ",";
    ep.task_id += std::to_string(c);
    const std::vector<std::size_t> picks = choose(inst.size(), need, rng);
    for (std::size_t j = 0; j < picks.size(); ++j) {
      Example ex{inst[picks[j]], static_cast<int>(label),
                 {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(picks[j])}};
      (j < geometry.k_shot ? ep.support : ep.query).push_back(std::move(ex));
    }
  }
  return ep;
}

ClassTable synth_proto_tasks(std::size_t n_alphabets, std::size_t classes_per_alphabet,
                             std::size_t instances_per_class, std::size_t input_dim, double noise_sigma,
                             std::mt19937_64& rng) {
  if (n_alphabets == 0 || classes_per_alphabet == 0 || instances_per_class == 0 || input_dim == 0) {
    throw ContractError("synth_proto_tasks: all counts must be positive");
  }
  if (!(noise_sigma >= 0.0)) throw ContractError("synth_proto_tasks: noise_sigma must be non-negative");
  if (input_dim < classes_per_alphabet) {
    throw ContractError("synth_proto_tasks: input_dim " + std::to_string(input_dim) +
                        " is smaller than classes_per_alphabet " + std::to_string(classes_per_alphabet));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = input_dim;

  ClassTable table;
  table.input_dim = d;
  char name[64];
  for (std::size_t a = 0; a < n_alphabets; ++a) {
    // Orthonormal rows by modified Gram-Schmidt on a Gaussian matrix.
    std::vector<double> rot(d * d);
    for (auto& x : rot) x = normal(rng);
    for (std::size_t i = 0; i < d; ++i) {
      double* ri = rot.data() + i * d;
      for (std::size_t j = 0; j < i; ++j) {
        const double* rj = rot.data() + j * d;
        double dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) dot += ri[k] * rj[k];
        for (std::size_t k = 0; k < d; ++k) ri[k] -= dot * rj[k];
      }
      double nrm = 0.0;
      for (std::size_t k = 0; k < d; ++k) nrm += ri[k] * ri[k];
      nrm = std::sqrt(nrm);
      for (std::size_t k = 0; k < d; ++k) ri[k] /= nrm;
    }

    Alphabet alpha;
    std::snprintf(name, sizeof name, "alphabet_%03zu", a);
    alpha.name = name;
    for (std::size_t c = 0; c < classes_per_alphabet; ++c) {
      CharacterClass cls;
      std::snprintf(name, sizeof name, "character_%03zu", c);
      cls.name = name;
      std::vector<double> proto(d);
      for (auto& x : proto) x = normal(rng);
      for (std::size_t i = 0; i < instances_per_class; ++i) {
        std::vector<double> raw(d);
        for (std::size_t k = 0; k < d; ++k) raw[k] = proto[k] + (noise_sigma > 0.0 ? noise_sigma * normal(rng) : 0.0);
        std::vector<double> x(d, 0.0);
        for (std::size_t r = 0; r < d; ++r) {
          double s = 0.0;
          for (std::size_t k = 0; k < d; ++k) s += rot[r * d + k] * raw[k];
          x[r] = s;
        }
        cls.instances.push_back(std::move(x));
      }
      alpha.characters.push_back(std::move(cls));
    }
    table.alphabets.push_back(std::move(alpha));
  }
  return table;
}

Batch to_batch(std::span<const Example> examples) {
  if (examples.empty()) throw ContractError("to_batch: no examples");
  const std::size_t d = examples.front().x.size();
  Batch b;
  b.x = Tensor({examples.size(), d});
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].x.size() != d) throw ShapeError("to_batch: ragged inputs");
    std::copy(examples[i].x.begin(), examples[i].x.end(), b.x.data().begin() + static_cast<std::ptrdiff_t>(i * d));
    b.labels.push_back(examples[i].label);
  }
  return b;
}

Task to_task(const Episode& episode) { return Task{to_batch(episode.support), to_batch(episode.query)}; }

std::string episode_csv(const Episode& episode) {
  std::string out = "task_id,split,label";
  const std::size_t d = episode.support.empty() ? 0 : episode.support.front().x.size();
  for (std::size_t k = 0; k < d; ++k) out += ",x" + std::to_string(k);
  out += "\n";
  auto rows = [&](const std::vector<Example>& set, const char* split) {
    for (const auto& ex : set) {
      out += episode.task_id + "," + split + "," + std::to_string(ex.label);
      for (double x : ex.x) out += "," + format_double(x);
      out += "\n";
    }
  };
  rows(episode.support, "support");
  rows(episode.query, "query");
  return out;
}

std::string encode_table(const ClassTable& table) {
  std::string out = "WTAB";
  binio::put_u32(out, 1);
  binio::put_u64(out, table.input_dim);
  binio::put_u64(out, table.skipped_empty);
  binio::put_u64(out, table.alphabets.size());
  for (const auto& a : table.alphabets) {
    binio::put_str(out, a.name);
    binio::put_u64(out, a.characters.size());
    for (const auto& c : a.characters) {
      binio::put_str(out, c.name);
      binio::put_u64(out, c.instances.size());
      for (const auto& inst : c.instances) {
        if (inst.size() != table.input_dim) throw ShapeError("class table instance has wrong dimension");
        for (double x : inst) binio::put_f64(out, x);
      }
    }
  }
  return out;
}

ClassTable decode_table(const std::string& bytes) {
  binio::Reader in(bytes, "class table");
  if (in.take(4) != "WTAB") throw ParseError("class table: bad magic");
  if (const auto v = in.u32(); v != 1) throw ParseError("class table: unsupported version " + std::to_string(v));
  ClassTable t;
  t.input_dim = in.u64();
  t.skipped_empty = in.u64();
  const std::uint64_t na = in.u64();
  for (std::uint64_t a = 0; a < na; ++a) {
    Alphabet alpha;
    alpha.name = in.str();
    const std::uint64_t nc = in.u64();
    for (std::uint64_t c = 0; c < nc; ++c) {
      CharacterClass cls;
      cls.name = in.str();
      const std::uint64_t ni = in.u64();
      if (t.input_dim != 0 && ni > in.remaining() / (8 * t.input_dim)) throw ParseError("class table: truncated");
      for (std::uint64_t i = 0; i < ni; ++i) {
        std::vector<double> x(t.input_dim);
        for (auto& v : x) v = in.f64();
        cls.instances.push_back(std::move(x));
      }
      alpha.characters.push_back(std::move(cls));
    }
    t.alphabets.push_back(std::move(alpha));
  }
  if (!in.done()) throw ParseError("class table: trailing bytes");
  return t;
}

void save_table(const ClassTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_table(table);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

ClassTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_table(bytes);
}

void check_alphabet_split(const ClassTable& table, std::span<const std::size_t> train,
                          std::span<const std::size_t> eval) {
  std::set<std::size_t> seen;
  for (std::size_t a : train) {
    if (a >= table.alphabets.size()) throw ContractError("train alphabet " + std::to_string(a) + " out of range");
    seen.insert(a);
  }
  for (std::size_t a : eval) {
    if (a >= table.alphabets.size()) throw ContractError("eval alphabet " + std::to_string(a) + " out of range");
    if (seen.count(a)) throw ContractError("alphabet " + std::to_string(a) + " is in both train and eval splits");
  }
}

}  // namespace warpadam
