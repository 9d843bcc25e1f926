#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dcnav/rng.hpp"
#include "dcnav/sim_env.hpp"

namespace dcnav {

struct SplitCounts {
  size_t train = 400;
  size_t val_seen = 60;
  size_t val_unseen = 60;
};

// Procedural world parameters. Constraints beyond the obvious ones:
// n_object_tags must be at least the number of seen rooms (every room needs
// a tag, and every tag word must occur in the training split) and at most
// 3x that count (rooms hold 1-3 tags).
struct WorldSpec {
  uint64_t seed = 7;
  size_t rooms_x = 4;
  size_t rooms_y = 4;
  double room_size = 6.0;
  size_t n_object_tags = 24;
  size_t feature_dim = 64;
  SplitCounts episodes;
};

// One dataset record: a path plus its instruction paraphrases. Mirrors the
// R2R on-disk schema; an N-instruction record expands to N episodes.
struct PathRecord {
  std::string path_id;
  std::vector<std::string> path;  // node ids
  int heading_bin = 0;
  std::vector<std::string> instructions;
};

struct GeneratedWorld {
  WorldSpec spec;
  NavGraph graph;

  std::vector<std::string> tag_names;          // tag index == feature basis index
  std::vector<std::vector<size_t>> room_tags;  // per room, sorted tag indices
  std::vector<size_t> room_center;             // room index -> node index
  std::vector<int> node_room;                  // center nodes -> room; else -1
  std::vector<std::array<int, 2>> node_doorway_rooms;  // doorways; else {-1,-1}
  std::map<std::pair<size_t, size_t>, int> tag_bin;    // (room, tag) -> heading bin
  std::vector<size_t> unseen_rooms;            // rooms absent from train routes

  std::vector<PathRecord> records_train, records_val_seen, records_val_unseen;
  std::vector<Episode> train, val_seen, val_unseen;

  std::vector<std::string> vocab_words;               // embedding file order
  std::vector<std::vector<double>> vocab_vectors;     // parallel; dim = feature_dim
};

size_t room_of(const WorldSpec& spec, size_t rx, size_t ry);

GeneratedWorld generate_world(const WorldSpec& spec);

// Whether `tag`'s signature is present in the cell (node, heading_bin).
// Single source of truth shared by the feature writer and the margin tests.
bool tag_visible(const GeneratedWorld& w, size_t node, int heading_bin, size_t tag);

// Templated instruction for a path. variant in 0..2 selects the paraphrase
// wording; rng drives tag word choices. Turn words reflect path geometry.
std::string generate_instruction(const GeneratedWorld& w,
                                 const std::vector<size_t>& path, int variant,
                                 RngStream& rng);

struct FileManifest {
  // (file name, fnv1a64 hex of contents), in emission order.
  std::vector<std::pair<std::string, std::string>> files;
};

// Writes world.json, embeddings.txt and the three episode split files.
FileManifest write_world_files(const GeneratedWorld& w, const std::string& out_dir);

std::vector<Episode> expand_records(const std::vector<PathRecord>& records,
                                    const NavGraph& g, const std::string& split);

// Parses an R2R-style episode array and resolves node ids against g.
std::vector<Episode> load_r2r_format(const std::string& path, const NavGraph& g,
                                     const std::string& split);

}  // namespace dcnav
