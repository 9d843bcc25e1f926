#include "dcnav/encoders.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include "dcnav/error.hpp"
#include "dcnav/util.hpp"

namespace dcnav {

Vocabulary Vocabulary::load(const std::string& emb_path,
                            const std::string& stopword_path) {
  Vocabulary v;
  std::istringstream in(read_file(emb_path));
  std::string line;
  std::vector<double> values;
  std::vector<std::string> words;
  size_t dim = 0, line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    std::vector<double> row;
    double x;
    while (ls >> x) row.push_back(x);
    if (!ls.eof()) {
      throw ParseError(emb_path + ":" + std::to_string(line_no) +
                       ": non-numeric embedding value for word '" + word + "'");
    }
    if (row.empty()) {
      throw ParseError(emb_path + ":" + std::to_string(line_no) +
                       ": word '" + word + "' has no embedding values");
    }
    if (dim == 0) dim = row.size();
    if (row.size() != dim) {
      throw ParseError(emb_path + ":" + std::to_string(line_no) + ": word '" +
                       word + "' has " + std::to_string(row.size()) +
                       " values, expected " + std::to_string(dim));
    }
    for (double val : row) {
      if (!std::isfinite(val)) {
        throw ParseError(emb_path + ":" + std::to_string(line_no) +
                         ": non-finite embedding value for word '" + word + "'");
      }
    }
    if (!v.index.emplace(word, words.size()).second) {
      throw ParseError(emb_path + ":" + std::to_string(line_no) +
                       ": duplicate word '" + word + "'");
    }
    words.push_back(word);
    values.insert(values.end(), row.begin(), row.end());
  }
  if (words.empty()) throw ParseError(emb_path + ": no embeddings found");
  v.embeddings = Tensor({words.size(), dim});
  for (size_t i = 0; i < values.size(); ++i) v.embeddings[i] = values[i];

  std::istringstream sin(read_file(stopword_path));
  while (std::getline(sin, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) v.stopwords.insert(line);
  }
  return v;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    unsigned char u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

InstructionEncoding encode_instruction(const std::string& text,
                                       const Vocabulary& vocab,
                                       const ag::Variable& embedding,
                                       const ag::Variable& w_ih,
                                       const ag::Variable& w_hh,
                                       const ag::Variable& b) {
  InstructionEncoding enc;
  for (const auto& tok : tokenize(text)) {
    if (!vocab.stopwords.count(tok)) enc.kept.push_back(tok);
  }
  if (enc.kept.empty()) {
    throw EmptyInstructionError("instruction '" + text +
                                "' has no tokens left after stopword filtering");
  }
  size_t d_word = embedding.value().dim(1);
  size_t hidden = w_hh.value().dim(1);
  ag::Variable h = ag::Variable::constant(Tensor::zeros({hidden}));
  ag::Variable c = ag::Variable::constant(Tensor::zeros({hidden}));
  std::vector<ag::Variable> states;
  states.reserve(enc.kept.size());
  for (const auto& tok : enc.kept) {
    ag::Variable x;
    auto it = vocab.index.find(tok);
    if (it != vocab.index.end()) {
      x = ag::row(embedding, it->second);
    } else {
      x = ag::Variable::constant(Tensor::zeros({d_word}));
    }
    auto [h_next, c_next] = ag::lstm_cell(x, h, c, w_ih, w_hh, b);
    h = h_next;
    c = c_next;
    states.push_back(h);
  }
  enc.X = ag::stack_rows(states);
  return enc;
}

ag::Variable build_feature_grid(const NavNode& node, size_t feature_dim,
                                const AgentPose& pose, const ag::Variable& w_b,
                                const ag::Variable& b_b, bool absolute_theta) {
  if (node.features.size() != static_cast<size_t>(kGridCells) * feature_dim) {
    throw ShapeError("node " + node.id + " has " +
                     std::to_string(node.features.size()) +
                     " feature values, expected " +
                     std::to_string(kGridCells * feature_dim));
  }
  if (pose.heading_bin < 0 || pose.heading_bin >= kHeadingBins ||
      pose.elev_bin < -1 || pose.elev_bin > 1) {
    throw IndexError("pose has heading bin " + std::to_string(pose.heading_bin) +
                     ", elevation bin " + std::to_string(pose.elev_bin));
  }

  Tensor raw({static_cast<size_t>(kGridCells), feature_dim});
  Tensor coords({static_cast<size_t>(kGridCells), 3});
  for (int offset = 0; offset < kHeadingBins; ++offset) {
    int abs_bin = (pose.heading_bin + offset) % kHeadingBins;
    double phi = wrap_angle(offset * kHeadingStepRad);
    for (int e = 0; e < kElevBins; ++e) {
      size_t cell = static_cast<size_t>(offset) * kElevBins + e;
      size_t src = (static_cast<size_t>(abs_bin) * kElevBins + e) * feature_dim;
      for (size_t d = 0; d < feature_dim; ++d) {
        raw[cell * feature_dim + d] = static_cast<double>(node.features[src + d]);
      }
      double cell_theta = (e - 1) * kElevStepRad;  // rows: bottom, mid, top
      double theta = absolute_theta ? cell_theta
                                    : cell_theta - elev_angle(pose.elev_bin);
      coords[cell * 3 + 0] = std::sin(phi);
      coords[cell * 3 + 1] = std::cos(phi);
      coords[cell * 3 + 2] = std::sin(theta);
    }
  }
  ag::Variable bottled = ag::relu(
      ag::linear_rows(ag::Variable::constant(std::move(raw)), w_b, b_b));
  return ag::concat_cols(bottled, ag::Variable::constant(std::move(coords)));
}

}  // namespace dcnav
