#include "dcnav/world_gen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dcnav/util.hpp"

namespace dcnav {

namespace {

using ordered_json = nlohmann::ordered_json;

// Object nouns usable as visual concept tags; single tokens, none of them
// function words used by the instruction templates.
const char* const kTagNouns[] = {
    "sofa",     "chair",    "table",   "lamp",    "plant",   "piano",
    "mirror",   "shelf",    "vase",    "rug",     "desk",    "bed",
    "stove",    "sink",     "fridge",  "clock",   "painting", "couch",
    "bench",    "cabinet",  "dresser", "fireplace", "bathtub", "window",
    "curtain",  "stool",    "wardrobe", "bookcase", "radiator", "aquarium",
    "statue",   "basket",   "easel",   "ladder",  "drum",    "loom",
    "anvil",    "organ",    "harp",    "chest",
};
constexpr size_t kTagNounCount = sizeof(kTagNouns) / sizeof(kTagNouns[0]);

// Every word the instruction templates can emit, deduplicated.
const char* const kTemplateWords[] = {
    "wait", "there", "stay", "where", "you", "are", "remain", "in", "this",
    "place", "leave", "the", "behind", "from", "start", "beside", "go",
    "straight", "past", "continue", "walk", "turn", "right", "left", "at",
    "take", "a", "by", "and", "stop", "then", "near", "until", "reach",
    "end", "around", "ahead", "move",
};
constexpr size_t kTemplateWordCount = sizeof(kTemplateWords) / sizeof(kTemplateWords[0]);

std::string tag_word(size_t tag) {
  if (tag < kTagNounCount) return kTagNouns[tag];
  return "object" + std::to_string(tag);
}

int nearest_bin(double angle) {
  long b = std::lround(angle / kHeadingStepRad);
  return static_cast<int>(((b % kHeadingBins) + kHeadingBins) % kHeadingBins);
}

bool bins_adjacent(int a, int b) {
  int d = std::abs(a - b) % kHeadingBins;
  return std::min(d, kHeadingBins - d) <= 1;
}

struct RoomXY {
  long x, y;
};

RoomXY room_xy(const WorldSpec& spec, size_t room) {
  return {static_cast<long>(room % spec.rooms_x),
          static_cast<long>(room / spec.rooms_x)};
}

void room_center_pos(const WorldSpec& spec, size_t room, double& x, double& y) {
  RoomXY rc = room_xy(spec, room);
  x = (rc.x + 0.5) * spec.room_size;
  y = (rc.y + 0.5) * spec.room_size;
}

void validate_spec(const WorldSpec& spec, size_t n_seen_rooms) {
  size_t rooms = spec.rooms_x * spec.rooms_y;
  if (spec.rooms_x < 1 || spec.rooms_y < 1 || rooms < 2) {
    throw GenerationError("world spec: need at least a 2-room grid");
  }
  if (spec.room_size <= 0.0) throw GenerationError("world spec: room_size must be positive");
  if (spec.n_object_tags < 1) throw GenerationError("world spec: need at least one object tag");
  if (spec.feature_dim < spec.n_object_tags) {
    throw GenerationError("world spec: feature_dim must be >= n_object_tags so tag "
                          "signatures embed injectively");
  }
  if (spec.n_object_tags < n_seen_rooms) {
    std::ostringstream os;
    os << "world spec: " << n_seen_rooms << " seen rooms need at least that many "
       << "object tags (got " << spec.n_object_tags << ")";
    throw GenerationError(os.str());
  }
  if (spec.n_object_tags > 3 * n_seen_rooms) {
    std::ostringstream os;
    os << "world spec: " << spec.n_object_tags << " tags cannot fit in "
       << n_seen_rooms << " seen rooms at 1-3 tags per room";
    throw GenerationError(os.str());
  }
}

}  // namespace

size_t room_of(const WorldSpec& spec, size_t rx, size_t ry) {
  return ry * spec.rooms_x + rx;
}

bool tag_visible(const GeneratedWorld& w, size_t node, int heading_bin, size_t tag) {
  auto room_has = [&w](size_t room, size_t t) {
    const auto& tags = w.room_tags[room];
    return std::find(tags.begin(), tags.end(), t) != tags.end();
  };
  // Viewpoint position: room centers sit at their room, doorway nodes at the
  // midpoint between the two rooms they join.
  int in_room = w.node_room.at(node);
  double px, py;
  if (in_room >= 0) {
    if (room_has(static_cast<size_t>(in_room), tag)) return true;  // surrounds you
    room_center_pos(w.spec, in_room, px, py);
  } else {
    const auto& joined = w.node_doorway_rooms.at(node);
    if (joined[0] < 0) return false;
    double dx0, dy0, dx1, dy1;
    room_center_pos(w.spec, joined[0], dx0, dy0);
    room_center_pos(w.spec, joined[1], dx1, dy1);
    px = 0.5 * (dx0 + dx1);
    py = 0.5 * (dy0 + dy1);
  }
  // Elsewhere the tag reads as a directional cue: it lights the heading bins
  // that face the room holding it, wherever the viewer stands.
  for (size_t room = 0; room < w.room_tags.size(); ++room) {
    if (static_cast<int>(room) == in_room) continue;
    if (!room_has(room, tag)) continue;
    double cx, cy;
    room_center_pos(w.spec, room, cx, cy);
    if (cx == px && cy == py) continue;
    int toward = nearest_bin(std::atan2(cx - px, cy - py));
    if (bins_adjacent(heading_bin, toward)) return true;
  }
  return false;
}

std::string generate_instruction(const GeneratedWorld& w,
                                 const std::vector<size_t>& path, int variant,
                                 RngStream& rng) {
  if (variant < 0 || variant > 2) throw ConfigError("instruction variant must be 0..2");
  if (path.empty()) throw GenerationError("generate_instruction: empty path");

  if (path.size() == 1) {
    static const char* const kStopOnly[3] = {
        "wait there.", "stay where you are.", "remain in this place."};
    return kStopOnly[variant];
  }

  std::vector<size_t> rooms;
  for (size_t n : path) {
    int r = w.node_room.at(n);
    if (r >= 0) rooms.push_back(static_cast<size_t>(r));
  }
  if (rooms.size() < 2) {
    static const char* const kShort[3] = {
        "walk ahead and stop there.", "go ahead and wait there.",
        "move ahead, then end there."};
    return kShort[variant];
  }

  auto mention = [&](size_t room) {
    const auto& tags = w.room_tags.at(room);
    if (tags.empty()) throw GenerationError("room without tags mentioned in instruction");
    return tag_word(tags[rng.next_below(tags.size())]);
  };

  static const char* const kOpener[3] = {"leave the % behind", "from the %",
                                         "start beside the %"};
  static const char* const kStraight[3] = {"go straight past the %",
                                           "continue straight past the %",
                                           "walk past the %"};
  static const char* const kRight[3] = {"turn right at the %", "take a right at the %",
                                        "turn right by the %"};
  static const char* const kLeft[3] = {"turn left at the %", "take a left at the %",
                                       "turn left by the %"};
  static const char* const kAround[3] = {"turn around at the %",
                                         "turn around by the %",
                                         "turn around near the %"};
  static const char* const kGoal[3] = {"and stop at the %.", "then wait near the %.",
                                       "until you reach the %, and end there."};
  // Goal phrases name two of the room's tags whenever it has two. Single tags
  // can recur across rooms, but a pair of co-located tags picks out one room,
  // so the two-word form is what makes the destination unambiguous.
  static const char* const kGoalPair[3] = {
      "and stop at the % beside the %.", "then wait near the % and the %.",
      "until you reach the % alongside the %, and end there."};

  auto fill = [](const char* tpl, const std::vector<std::string>& words) {
    std::string out;
    size_t next = 0;
    for (const char* p = tpl; *p; ++p) {
      if (*p == '%') out += words.at(std::min(next++, words.size() - 1));
      else out.push_back(*p);
    }
    return out;
  };

  // Compass bin of the room-grid step from a to b (axis-aligned by layout).
  auto step_bin = [&](size_t a, size_t b) {
    RoomXY pa = room_xy(w.spec, a), pb = room_xy(w.spec, b);
    return nearest_bin(std::atan2(static_cast<double>(pb.x - pa.x),
                                  static_cast<double>(pb.y - pa.y)));
  };

  std::string text = fill(kOpener[variant], {mention(rooms.front())});
  for (size_t i = 1; i + 1 < rooms.size(); ++i) {
    int turn = (step_bin(rooms[i], rooms[i + 1]) - step_bin(rooms[i - 1], rooms[i]) +
                kHeadingBins) % kHeadingBins;
    const char* const* clause = kStraight;
    if (turn == 3) clause = kRight;
    else if (turn == 9) clause = kLeft;
    else if (turn == 6) clause = kAround;
    text += ", " + fill(clause[variant], {mention(rooms[i])});
  }
  const auto& goal_tags = w.room_tags.at(rooms.back());
  if (goal_tags.size() >= 2) {
    size_t a = rng.next_below(goal_tags.size());
    size_t b = rng.next_below(goal_tags.size() - 1);
    if (b >= a) ++b;
    text += ", " + fill(kGoalPair[variant],
                        {tag_word(goal_tags[a]), tag_word(goal_tags[b])});
  } else {
    text += ", " + fill(kGoal[variant], {mention(rooms.back())});
  }
  return text;
}

namespace {

// Internal construction state shared by the generation phases.
struct NodePlan {
  std::string id;
  double x, y, z;
  int room = -1;                      // center nodes
  std::array<int, 2> doorway = {-1, -1};
};

std::vector<Episode> make_split_records(
    GeneratedWorld& w, const std::string& split, size_t episode_count,
    const std::set<size_t>& unseen, const std::set<std::vector<std::string>>& taken,
    std::vector<PathRecord>& records_out) {
  const WorldSpec& spec = w.spec;
  bool goal_unseen = split == "val_unseen";
  RngStream path_rng(derive_seed(spec.seed, {fnv1a64("paths"), fnv1a64(split)}));
  RngStream instr_rng(derive_seed(spec.seed, {fnv1a64("instr"), fnv1a64(split)}));

  long max_manhattan = static_cast<long>(spec.rooms_x - 1 + spec.rooms_y - 1);
  long max_hops = std::min<long>(3, max_manhattan);
  if (max_hops < 1) throw GenerationError("world too small for any route");

  // Training episodes each get their own route, so route coverage scales with
  // the split size; validation keeps three phrasings per route to measure
  // robustness to instruction wording.
  const bool one_instruction_per_path = split == "train";
  size_t n_records = one_instruction_per_path ? episode_count
                                              : (episode_count + 2) / 3;
  records_out.clear();
  records_out.reserve(n_records);
  size_t remaining = episode_count;

  auto center_id = [&](size_t room) { return w.graph.node(w.room_center[room]).id; };
  auto doorway_between = [&](size_t a, size_t b) -> std::string {
    // Doorway ids are derived from the lower-coordinate room of the pair.
    RoomXY pa = room_xy(spec, a), pb = room_xy(spec, b);
    char buf[48];
    if (pa.y == pb.y) {
      long x = std::min(pa.x, pb.x);
      std::snprintf(buf, sizeof(buf), "d%ld_%ld_h", x, pa.y);
    } else {
      long y = std::min(pa.y, pb.y);
      std::snprintf(buf, sizeof(buf), "d%ld_%ld_v", std::min(pa.x, pb.x), y);
    }
    return buf;
  };

  for (size_t rec_idx = 0; rec_idx < n_records; ++rec_idx) {
    std::vector<std::string> node_path;
    bool accepted = false;
    for (int attempt = 0; attempt < 500 && !accepted; ++attempt) {
      // Unseen-goal routes always carry at least one mid-route clause, so the
      // wording leading into the goal room is of a kind training covers.
      long min_hops = goal_unseen ? std::min<long>(2, max_hops) : 1;
      long hops = min_hops + static_cast<long>(path_rng.next_below(
                                 static_cast<uint64_t>(max_hops - min_hops + 1)));
      long kx = static_cast<long>(path_rng.next_below(hops + 1));
      long ky = hops - kx;
      long sx = path_rng.next_below(2) ? 1 : -1;
      long sy = path_rng.next_below(2) ? 1 : -1;
      long dx = sx * kx, dy = sy * ky;

      // Anchor the walk at the goal for unseen routes, at the start otherwise.
      size_t anchor;
      if (goal_unseen) {
        std::vector<size_t> pool(unseen.begin(), unseen.end());
        anchor = pool[path_rng.next_below(pool.size())];
      } else {
        anchor = path_rng.next_below(spec.rooms_x * spec.rooms_y);
        if (unseen.count(anchor)) continue;
      }
      RoomXY a = room_xy(spec, anchor);
      long gx, gy, startx, starty;
      if (goal_unseen) {
        gx = a.x; gy = a.y;
        startx = gx - dx; starty = gy - dy;
      } else {
        startx = a.x; starty = a.y;
        gx = startx + dx; gy = starty + dy;
      }
      if (startx < 0 || starty < 0 || gx < 0 || gy < 0 ||
          startx >= static_cast<long>(spec.rooms_x) ||
          gx >= static_cast<long>(spec.rooms_x) ||
          starty >= static_cast<long>(spec.rooms_y) ||
          gy >= static_cast<long>(spec.rooms_y)) {
        continue;
      }

      // Random monotone route: shuffle the axis moves.
      std::vector<int> moves(static_cast<size_t>(kx), 0);
      moves.insert(moves.end(), static_cast<size_t>(ky), 1);
      path_rng.shuffle(moves);
      std::vector<size_t> route;
      long cx = startx, cy = starty;
      route.push_back(room_of(spec, cx, cy));
      for (int m : moves) {
        if (m == 0) cx += sx;
        else cy += sy;
        route.push_back(room_of(spec, cx, cy));
      }

      bool ok = true;
      for (size_t i = 0; i < route.size(); ++i) {
        bool may_be_unseen = goal_unseen && i + 1 == route.size();
        if (unseen.count(route[i]) && !may_be_unseen) { ok = false; break; }
      }
      if (goal_unseen && !unseen.count(route.back())) ok = false;
      if (!ok) continue;

      node_path.clear();
      node_path.push_back(center_id(route[0]));
      for (size_t i = 1; i < route.size(); ++i) {
        node_path.push_back(doorway_between(route[i - 1], route[i]));
        node_path.push_back(center_id(route[i]));
      }
      // Keep validation routes distinct from training routes when possible.
      if (split != "train" && taken.count(node_path) && attempt < 200) continue;
      accepted = true;
    }
    if (!accepted) {
      throw GenerationError("could not sample a route for split " + split +
                            "; the spec's room grid or unseen-room layout leaves "
                            "no feasible paths");
    }

    PathRecord rec;
    char idbuf[48];
    std::snprintf(idbuf, sizeof(idbuf), "%s_%04zu", split.c_str(), rec_idx);
    rec.path_id = idbuf;
    rec.path = node_path;
    rec.heading_bin = static_cast<int>(path_rng.next_below(kHeadingBins));
    size_t n_instr = one_instruction_per_path ? 1 : std::min<size_t>(3, remaining);
    remaining -= n_instr;
    std::vector<size_t> idx_path;
    for (const auto& id : node_path) idx_path.push_back(w.graph.index_of(id));
    for (size_t v = 0; v < n_instr; ++v) {
      // Rotate the phrasing template so every style appears in training.
      int variant = one_instruction_per_path ? static_cast<int>(rec_idx % 3)
                                             : static_cast<int>(v);
      rec.instructions.push_back(
          generate_instruction(w, idx_path, variant, instr_rng));
    }
    records_out.push_back(std::move(rec));
  }
  return expand_records(records_out, w.graph, split);
}

}  // namespace

GeneratedWorld generate_world(const WorldSpec& spec) {
  size_t rooms = spec.rooms_x * spec.rooms_y;

  // Unseen rooms sit at grid corners so the seen region stays connected.
  std::set<size_t> unseen;
  if (spec.episodes.val_unseen > 0) {
    if (rooms < 4) {
      throw GenerationError("val_unseen split impossible: fewer than 4 rooms");
    }
    unseen.insert(rooms - 1);
    if (rooms >= 9) unseen.insert(0);
  }
  validate_spec(spec, rooms - unseen.size());

  GeneratedWorld w;
  w.spec = spec;
  w.unseen_rooms.assign(unseen.begin(), unseen.end());

  // --- node layout: centers first (node index == room index), then doorways
  std::vector<NodePlan> plans;
  for (size_t r = 0; r < rooms; ++r) {
    NodePlan p;
    RoomXY rc = room_xy(spec, r);
    char buf[48];
    std::snprintf(buf, sizeof(buf), "r%ld_%ld", rc.x, rc.y);
    p.id = buf;
    room_center_pos(spec, r, p.x, p.y);
    p.z = 0.0;
    p.room = static_cast<int>(r);
    plans.push_back(p);
  }
  struct DoorwayPlan { size_t plan_idx, room_a, room_b; };
  std::vector<DoorwayPlan> doorways;
  for (size_t ry = 0; ry < spec.rooms_y; ++ry) {
    for (size_t rx = 0; rx < spec.rooms_x; ++rx) {
      if (rx + 1 < spec.rooms_x) {
        NodePlan p;
        char buf[48];
        std::snprintf(buf, sizeof(buf), "d%zu_%zu_h", rx, ry);
        p.id = buf;
        p.x = (rx + 1.0) * spec.room_size;
        p.y = (ry + 0.5) * spec.room_size;
        p.z = 0.0;
        p.doorway = {static_cast<int>(room_of(spec, rx, ry)),
                     static_cast<int>(room_of(spec, rx + 1, ry))};
        doorways.push_back({plans.size(), room_of(spec, rx, ry), room_of(spec, rx + 1, ry)});
        plans.push_back(p);
      }
      if (ry + 1 < spec.rooms_y) {
        NodePlan p;
        char buf[48];
        std::snprintf(buf, sizeof(buf), "d%zu_%zu_v", rx, ry);
        p.id = buf;
        p.x = (rx + 0.5) * spec.room_size;
        p.y = (ry + 1.0) * spec.room_size;
        p.z = 0.0;
        p.doorway = {static_cast<int>(room_of(spec, rx, ry)),
                     static_cast<int>(room_of(spec, rx, ry + 1))};
        doorways.push_back({plans.size(), room_of(spec, rx, ry), room_of(spec, rx, ry + 1)});
        plans.push_back(p);
      }
    }
  }
  w.node_room.resize(plans.size());
  w.node_doorway_rooms.resize(plans.size());
  for (size_t i = 0; i < plans.size(); ++i) {
    w.node_room[i] = plans[i].room;
    w.node_doorway_rooms[i] = plans[i].doorway;
  }
  w.room_center.resize(rooms);
  for (size_t r = 0; r < rooms; ++r) w.room_center[r] = r;

  // --- tags: names, per-room assignment with full coverage over seen rooms
  w.tag_names.resize(spec.n_object_tags);
  for (size_t t = 0; t < spec.n_object_tags; ++t) w.tag_names[t] = tag_word(t);

  RngStream tag_rng(derive_seed(spec.seed, {fnv1a64("tags")}));
  std::vector<size_t> seen_rooms;
  for (size_t r = 0; r < rooms; ++r) {
    if (!unseen.count(r)) seen_rooms.push_back(r);
  }
  std::vector<size_t> deck(spec.n_object_tags);
  for (size_t t = 0; t < deck.size(); ++t) deck[t] = t;
  tag_rng.shuffle(deck);
  w.room_tags.assign(rooms, {});
  for (size_t i = 0; i < deck.size(); ++i) {
    w.room_tags[seen_rooms[i % seen_rooms.size()]].push_back(deck[i]);
  }
  // Second placements while room capacity lasts. A tag that lives in two
  // rooms cannot be located from one word alone, so goal phrases that pair
  // two of a room's tags stay the reliable way to pin down a destination.
  // Rooms must end with distinct tag sets for that to hold, so redraw the
  // second placements on the rare collision.
  const std::vector<std::vector<size_t>> base_tags = w.room_tags;
  std::vector<size_t> doubled;
  std::set<std::vector<size_t>> seen_combos;
  for (int round = 0;; ++round) {
    if (round >= 50) {
      throw GenerationError("tag assignment failed: no collision-free second "
                            "placement found");
    }
    w.room_tags = base_tags;
    doubled.clear();
    seen_combos.clear();
    std::vector<size_t> deck2 = deck;
    tag_rng.shuffle(deck2);
    for (size_t t : deck2) {
      std::vector<size_t> open;
      for (size_t r : seen_rooms) {
        const auto& tags = w.room_tags[r];
        if (tags.size() >= 3) continue;
        if (std::find(tags.begin(), tags.end(), t) != tags.end()) continue;
        open.push_back(r);
      }
      if (open.empty()) continue;
      w.room_tags[open[tag_rng.next_below(open.size())]].push_back(t);
      doubled.push_back(t);
    }
    bool unique = true;
    for (size_t r : seen_rooms) {
      auto& tags = w.room_tags[r];
      std::sort(tags.begin(), tags.end());
      unique = seen_combos.insert(tags).second && unique;
    }
    if (unique) break;
  }
  std::sort(doubled.begin(), doubled.end());
  // Unseen rooms reuse trained tag words in fresh combinations, so their goal
  // phrases read normally while the combination itself is new.
  const std::vector<size_t>& unseen_pool = doubled.empty() ? deck : doubled;
  std::set<std::vector<size_t>> used_combos = seen_combos;
  for (size_t r : unseen) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      // At least two tags whenever the pool allows, so the room can be named
      // by a pair the same way seen goal rooms are.
      size_t max_count = std::min<size_t>(3, unseen_pool.size());
      size_t min_count = std::min<size_t>(2, max_count);
      size_t count = min_count + tag_rng.next_below(max_count - min_count + 1);
      std::set<size_t> pick;
      while (pick.size() < count) {
        pick.insert(unseen_pool[tag_rng.next_below(unseen_pool.size())]);
      }
      std::vector<size_t> combo(pick.begin(), pick.end());
      if (used_combos.count(combo)) continue;
      w.room_tags[r] = combo;
      used_combos.insert(combo);
      placed = true;
    }
    if (!placed) {
      throw GenerationError("val_unseen split impossible: no unused tag combination "
                            "left for an unseen room");
    }
  }
  for (size_t r = 0; r < rooms; ++r) {
    for (size_t t : w.room_tags[r]) {
      w.tag_bin[{r, t}] = static_cast<int>(tag_rng.next_below(kHeadingBins));
    }
  }

  // --- graph with per-node features
  for (size_t i = 0; i < plans.size(); ++i) {
    const NodePlan& p = plans[i];
    NavNode n;
    n.id = p.id;
    n.x = p.x;
    n.y = p.y;
    n.z = p.z;
    RngStream frng(derive_seed(spec.seed, {fnv1a64("features"), i}));
    n.features.resize(static_cast<size_t>(kGridCells) * spec.feature_dim);
    for (auto& v : n.features) {
      v = static_cast<float>(frng.uniform(-0.25, 0.25));
    }
    for (int bin = 0; bin < kHeadingBins; ++bin) {
      for (size_t t = 0; t < spec.n_object_tags; ++t) {
        if (!tag_visible(w, i, bin, t)) continue;
        for (int e = 0; e < kElevBins; ++e) {
          size_t cell = (static_cast<size_t>(bin) * kElevBins + e) * spec.feature_dim;
          n.features[cell + t] += 2.0f;
        }
      }
    }
    w.graph.add_node(std::move(n));
  }
  for (const auto& d : doorways) {
    w.graph.add_edge(d.room_a, d.plan_idx);
    w.graph.add_edge(d.plan_idx, d.room_b);
  }
  w.graph.finalize();

  // --- datasets
  w.train = make_split_records(w, "train", spec.episodes.train, unseen, {},
                               w.records_train);
  std::set<std::vector<std::string>> taken;
  for (const auto& rec : w.records_train) taken.insert(rec.path);
  w.val_seen = make_split_records(w, "val_seen", spec.episodes.val_seen, unseen,
                                  taken, w.records_val_seen);
  w.val_unseen = make_split_records(w, "val_unseen", spec.episodes.val_unseen,
                                    unseen, taken, w.records_val_unseen);

  // --- vocabulary: tag words carry their signature basis vector; function
  // words get small seeded noise.
  std::set<std::string> dedupe;
  for (size_t t = 0; t < spec.n_object_tags; ++t) {
    const std::string& word = w.tag_names[t];
    if (!dedupe.insert(word).second) {
      throw GenerationError("duplicate vocabulary word: " + word);
    }
    std::vector<double> vec(spec.feature_dim, 0.0);
    vec[t] = 1.0;
    w.vocab_words.push_back(word);
    w.vocab_vectors.push_back(std::move(vec));
  }
  for (size_t i = 0; i < kTemplateWordCount; ++i) {
    const std::string word = kTemplateWords[i];
    if (!dedupe.insert(word).second) {
      throw GenerationError("template word collides with a tag noun: " + word);
    }
    RngStream erng(derive_seed(spec.seed, {fnv1a64("embed"), fnv1a64(word)}));
    // Function words live in the subspace orthogonal to every tag signature,
    // so they never bleed into the tag-identity readout.
    std::vector<double> vec(spec.feature_dim, 0.0);
    for (size_t d = spec.n_object_tags; d < spec.feature_dim; ++d) {
      vec[d] = erng.uniform(-0.5, 0.5);
    }
    w.vocab_words.push_back(word);
    w.vocab_vectors.push_back(std::move(vec));
  }
  return w;
}

std::vector<Episode> expand_records(const std::vector<PathRecord>& records,
                                    const NavGraph& g, const std::string& split) {
  std::vector<Episode> out;
  for (const auto& rec : records) {
    std::vector<size_t> idx_path;
    idx_path.reserve(rec.path.size());
    for (const auto& id : rec.path) {
      if (!g.has_node(id)) {
        throw ParseError("episode " + rec.path_id + ": unknown node id " + id);
      }
      idx_path.push_back(g.index_of(id));
    }
    for (size_t j = 0; j < rec.instructions.size(); ++j) {
      Episode ep;
      ep.id = rec.path_id + "_" + std::to_string(j);
      ep.path = idx_path;
      ep.start_heading_bin = rec.heading_bin;
      ep.instruction = rec.instructions[j];
      ep.split = split;
      validate_episode(g, ep);
      out.push_back(std::move(ep));
    }
  }
  return out;
}

std::vector<Episode> load_r2r_format(const std::string& path, const NavGraph& g,
                                     const std::string& split) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!doc.is_array()) throw ParseError(path + ": expected a JSON array of episodes");
  std::vector<PathRecord> records;
  for (size_t i = 0; i < doc.size(); ++i) {
    const auto& jr = doc[i];
    PathRecord rec;
    try {
      const auto& pid = jr.at("path_id");
      rec.path_id = pid.is_string() ? pid.get<std::string>()
                                    : std::to_string(pid.get<long long>());
      for (const auto& jid : jr.at("path")) rec.path.push_back(jid.get<std::string>());
      double heading = jr.at("heading").get<double>();
      rec.heading_bin = nearest_bin(heading);
      for (const auto& ji : jr.at("instructions")) {
        rec.instructions.push_back(ji.get<std::string>());
      }
    } catch (const nlohmann::json::exception& e) {
      std::ostringstream os;
      os << path << ": record " << i;
      if (!rec.path_id.empty()) os << " (path_id " << rec.path_id << ")";
      os << ": " << e.what();
      throw ParseError(os.str());
    }
    if (rec.path.empty()) {
      throw ParseError(path + ": record " + rec.path_id + " has an empty path");
    }
    records.push_back(std::move(rec));
  }
  return expand_records(records, g, split);
}

namespace {

std::string format_embedding_line(const std::string& word,
                                  const std::vector<double>& vec) {
  std::string line = word;
  char buf[40];
  for (double v : vec) {
    std::snprintf(buf, sizeof(buf), " %.9g", v);
    line += buf;
  }
  line += "\n";
  return line;
}

ordered_json episodes_json(const std::vector<PathRecord>& records) {
  ordered_json arr = ordered_json::array();
  for (const auto& rec : records) {
    ordered_json jr;
    jr["path_id"] = rec.path_id;
    jr["path"] = rec.path;
    jr["heading"] = rec.heading_bin * kHeadingStepRad;
    jr["instructions"] = rec.instructions;
    arr.push_back(std::move(jr));
  }
  return arr;
}

}  // namespace

FileManifest write_world_files(const GeneratedWorld& w, const std::string& out_dir) {
  const WorldSpec& spec = w.spec;
  FileManifest manifest;
  auto emit = [&](const std::string& name, const std::string& contents) {
    atomic_write_file(out_dir + "/" + name, contents);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(contents)));
    manifest.files.emplace_back(name, std::string(buf, 16));
  };

  ordered_json world;
  ordered_json meta;
  meta["seed"] = spec.seed;
  meta["rooms_x"] = spec.rooms_x;
  meta["rooms_y"] = spec.rooms_y;
  meta["room_size"] = spec.room_size;
  meta["n_object_tags"] = spec.n_object_tags;
  meta["feature_dim"] = spec.feature_dim;
  ordered_json rooms_meta = ordered_json::array();
  for (size_t r = 0; r < w.room_tags.size(); ++r) {
    ordered_json jr;
    jr["center"] = w.graph.node(w.room_center[r]).id;
    ordered_json tags = ordered_json::array();
    ordered_json bins = ordered_json::object();
    for (size_t t : w.room_tags[r]) {
      tags.push_back(w.tag_names[t]);
      bins[w.tag_names[t]] = w.tag_bin.at({r, t});
    }
    jr["tags"] = std::move(tags);
    jr["tag_bins"] = std::move(bins);
    jr["unseen"] = std::count(w.unseen_rooms.begin(), w.unseen_rooms.end(), r) > 0;
    rooms_meta.push_back(std::move(jr));
  }
  meta["rooms"] = std::move(rooms_meta);
  world["meta"] = std::move(meta);
  world["feature_dim"] = spec.feature_dim;

  ordered_json nodes = ordered_json::array();
  for (size_t i = 0; i < w.graph.size(); ++i) {
    const NavNode& n = w.graph.node(i);
    ordered_json jn;
    jn["id"] = n.id;
    jn["pos"] = {n.x, n.y, n.z};
    jn["features"] = base64_encode(n.features.data(), n.features.size() * sizeof(float));
    nodes.push_back(std::move(jn));
  }
  world["nodes"] = std::move(nodes);
  ordered_json edges = ordered_json::array();
  for (const auto& [a, b] : w.graph.edges()) {
    edges.push_back({w.graph.node(a).id, w.graph.node(b).id});
  }
  world["edges"] = std::move(edges);
  emit("world.json", world.dump(2) + "\n");

  std::string emb;
  for (size_t i = 0; i < w.vocab_words.size(); ++i) {
    emb += format_embedding_line(w.vocab_words[i], w.vocab_vectors[i]);
  }
  emit("embeddings.txt", emb);

  emit("episodes_train.json", episodes_json(w.records_train).dump(2) + "\n");
  emit("episodes_val_seen.json", episodes_json(w.records_val_seen).dump(2) + "\n");
  emit("episodes_val_unseen.json", episodes_json(w.records_val_unseen).dump(2) + "\n");
  return manifest;
}

}  // namespace dcnav
