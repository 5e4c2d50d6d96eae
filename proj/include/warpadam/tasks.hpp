#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "warpadam/nn.hpp"

namespace warpadam {

// Where an instance came from in its ClassTable.
struct InstanceId {
  std::uint32_t alphabet = 0;
  std::uint32_t character = 0;
  std::uint32_t instance = 0;

  friend auto operator<=>(const InstanceId&, const InstanceId&) = default;
};

struct Example {
  std::vector<double> x;
  int label = 0;
  InstanceId id;
};

// One n-way k-shot task. Labels are re-indexed to 0..n_way-1.
struct Episode {
  std::vector<Example> support;
  std::vector<Example> query;
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::string task_id;
};

struct CharacterClass {
  std::string name;
  std::vector<std::vector<double>> instances;  // flattened, values in [0, 1] for images

  friend bool operator==(const CharacterClass&, const CharacterClass&) = default;
};

struct Alphabet {
  std::string name;
  std::vector<CharacterClass> characters;

  friend bool operator==(const Alphabet&, const Alphabet&) = default;
};

// Alphabet -> character -> instances. Immutable once built.
struct ClassTable {
  std::vector<Alphabet> alphabets;
  std::size_t input_dim = 0;
  std::size_t skipped_empty = 0;  // character directories with no images

  friend bool operator==(const ClassTable&, const ClassTable&) = default;
};

struct EpisodeGeometry {
  std::size_t n_way = 5;
  std::size_t k_shot = 1;
  std::size_t query_per_class = 15;
};

// Draws an alphabet uniformly among those in `alphabet_pool` (all alphabets
// when empty) that have at least n_way classes with k_shot + query_per_class
// instances, then n_way of its eligible classes, then the instances of each
// class without replacement.
Episode sample_episode(const ClassTable& table, const EpisodeGeometry& geometry, std::mt19937_64& rng,
                       std::span<const std::size_t> alphabet_pool = {});

// Synthetic stand-in for a handwritten-character corpus: every alphabet has a
// random orthogonal "style" rotation R and every class a Gaussian prototype p;
// an instance is R (p + sigma * noise).
ClassTable synth_proto_tasks(std::size_t n_alphabets, std::size_t classes_per_alphabet,
                             std::size_t instances_per_class, std::size_t input_dim, double noise_sigma,
                             std::mt19937_64& rng);

// Reads root/<alphabet>/<character>/<instance>.pgm, resampling every image to
// image_side x image_side. Directory entries are visited in lexicographic order.
ClassTable import_image_classes(const std::filesystem::path& root, std::size_t image_side);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  unsigned maxval = 255;
  std::vector<std::uint8_t> pixels;
};

// Binary PGM (P5) with maxval <= 255. `origin` names the source in errors.
GrayImage decode_pgm(std::string_view bytes, const std::string& origin);
std::string encode_pgm(const GrayImage& image);
// Nearest-neighbour resample to side x side, scaled by maxval into [0, 1].
std::vector<double> resample_unit(const GrayImage& image, std::size_t side);

Batch to_batch(std::span<const Example> examples);
Task to_task(const Episode& episode);

// task_id,split,label,x0..x{d-1}
std::string episode_csv(const Episode& episode);

// Binary cache for an imported table ("WTAB", little-endian).
std::string encode_table(const ClassTable& table);
ClassTable decode_table(const std::string& bytes);
void save_table(const ClassTable& table, const std::filesystem::path& path);
ClassTable load_table(const std::filesystem::path& path);

// Throws unless both lists index valid alphabets and share none.
void check_alphabet_split(const ClassTable& table, std::span<const std::size_t> train,
                          std::span<const std::size_t> eval);

}  // namespace warpadam
