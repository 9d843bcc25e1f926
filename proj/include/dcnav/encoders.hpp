#pragma once

#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dcnav/autodiff.hpp"
#include "dcnav/sim_env.hpp"
#include "dcnav/tensor.hpp"

namespace dcnav {

// Word table backed by a pretrained-embedding text file plus a stopword list.
// Lookups are case-sensitive on already-lowercased tokens; out-of-vocabulary
// words encode as a zero vector.
struct Vocabulary {
  std::unordered_map<std::string, size_t> index;  // word -> embedding row
  Tensor embeddings;                              // [V, d_word]
  std::unordered_set<std::string> stopwords;

  size_t size() const { return index.size(); }
  size_t dim() const { return embeddings.defined() ? embeddings.dim(1) : 0; }

  // emb_path: lines of "word v1 v2 ... vk". stopword_path: one word per line.
  static Vocabulary load(const std::string& emb_path,
                         const std::string& stopword_path);
};

// Lowercase alphanumeric runs; everything else is a separator.
std::vector<std::string> tokenize(const std::string& text);

struct InstructionEncoding {
  ag::Variable X;                  // [N, hidden]: LSTM state after each token
  std::vector<std::string> kept;   // tokens that survived stopword filtering
};

// Tokenize, drop stopwords, look up embeddings (rows of `embedding`, which
// may be a trainable parameter or a constant), scan with an LSTM from zero
// state. Throws EmptyInstructionError when nothing survives filtering.
InstructionEncoding encode_instruction(const std::string& text,
                                       const Vocabulary& vocab,
                                       const ag::Variable& embedding,
                                       const ag::Variable& w_ih,
                                       const ag::Variable& w_hh,
                                       const ag::Variable& b);

// Agent-relative panoramic grid: 36 rows (12 relative-heading columns x 3
// elevation rows, cell index = offset*3 + elevation row bottom/mid/top), each
// row = ReLU(bottleneck(raw cell features)) ++ (sin phi, cos phi, sin theta).
// phi is the cell heading relative to the agent; theta is the cell elevation
// angle relative to the agent's, or absolute when absolute_theta is set.
ag::Variable build_feature_grid(const NavNode& node, size_t feature_dim,
                                const AgentPose& pose, const ag::Variable& w_b,
                                const ag::Variable& b_b, bool absolute_theta);

}  // namespace dcnav
