#include "dcnav/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace dcnav::ag {

namespace {

std::shared_ptr<Node> make_node(Tensor value, std::vector<std::shared_ptr<Node>> inputs,
                                const char* op) {
  auto n = std::make_shared<Node>();
  check_finite(value, op);
  n->value = std::move(value);
  n->op = op;
  for (const auto& in : inputs) {
    if (in->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  n->inputs = std::move(inputs);
  return n;
}

Tensor& grad_of(const std::shared_ptr<Node>& n) {
  if (!n->grad.defined()) n->grad = Tensor::zeros(n->value.shape());
  return n->grad;
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() +
                   " and " + b.shape_str());
}

void require_rank(const Variable& v, size_t rank, const char* op) {
  if (v.value().rank() != rank) {
    std::ostringstream os;
    os << op << ": expected rank-" << rank << " tensor, got " << v.value().shape_str();
    throw ShapeError(os.str());
  }
}

}  // namespace

Variable Variable::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  check_finite(value, "leaf");
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Variable(n);
}

Variable add(const Variable& a, const Variable& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const double* pb = b.value().data();
  for (size_t i = 0; i < out.numel(); ++i) out[i] += pb[i];
  auto n = make_node(std::move(out), {a.node(), b.node()}, "add");
  n->backprop = [](Node& self) {
    const Tensor& g = self.grad;
    for (int k = 0; k < 2; ++k) {
      if (!self.inputs[k]->requires_grad) continue;
      Tensor& gi = grad_of(self.inputs[k]);
      for (size_t i = 0; i < g.numel(); ++i) gi[i] += g[i];
    }
  };
  return Variable(n);
}

Variable sub(const Variable& a, const Variable& b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const double* pb = b.value().data();
  for (size_t i = 0; i < out.numel(); ++i) out[i] -= pb[i];
  auto n = make_node(std::move(out), {a.node(), b.node()}, "sub");
  n->backprop = [](Node& self) {
    const Tensor& g = self.grad;
    if (self.inputs[0]->requires_grad) {
      Tensor& ga = grad_of(self.inputs[0]);
      for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (self.inputs[1]->requires_grad) {
      Tensor& gb = grad_of(self.inputs[1]);
      for (size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  };
  return Variable(n);
}

Variable mul(const Variable& a, const Variable& b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const double* pb = b.value().data();
  for (size_t i = 0; i < out.numel(); ++i) out[i] *= pb[i];
  auto n = make_node(std::move(out), {a.node(), b.node()}, "mul");
  n->backprop = [](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad) {
      Tensor& ga = grad_of(self.inputs[0]);
      for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
    }
    if (self.inputs[1]->requires_grad) {
      Tensor& gb = grad_of(self.inputs[1]);
      for (size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
    }
  };
  return Variable(n);
}

Variable scale(const Variable& a, double c) {
  Tensor out = a.value();
  for (size_t i = 0; i < out.numel(); ++i) out[i] *= c;
  auto n = make_node(std::move(out), {a.node()}, "scale");
  n->backprop = [c](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    Tensor& ga = grad_of(self.inputs[0]);
    const Tensor& g = self.grad;
    for (size_t i = 0; i < g.numel(); ++i) ga[i] += c * g[i];
  };
  return Variable(n);
}

Variable tanh_op(const Variable& a) {
  Tensor out = a.value();
  for (size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
  auto n = make_node(std::move(out), {a.node()}, "tanh");
  n->backprop = [](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    Tensor& ga = grad_of(self.inputs[0]);
    const Tensor& g = self.grad;
    const Tensor& y = self.value;
    for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  };
  return Variable(n);
}

Variable relu(const Variable& a) {
  Tensor out = a.value();
  for (size_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  auto n = make_node(std::move(out), {a.node()}, "relu");
  n->backprop = [](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    Tensor& ga = grad_of(self.inputs[0]);
    const Tensor& g = self.grad;
    const Tensor& x = self.inputs[0]->value;
    for (size_t i = 0; i < g.numel(); ++i) ga[i] += x[i] > 0.0 ? g[i] : 0.0;
  };
  return Variable(n);
}

Variable sigmoid(const Variable& a) {
  Tensor out = a.value();
  for (size_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  auto n = make_node(std::move(out), {a.node()}, "sigmoid");
  n->backprop = [](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    Tensor& ga = grad_of(self.inputs[0]);
    const Tensor& g = self.grad;
    const Tensor& y = self.value;
    for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  };
  return Variable(n);
}

Variable matmul(const Variable& a, const Variable& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  size_t m = av.dim(0), k = av.dim(1), n2 = bv.dim(1);
  if (bv.dim(0) != k) shape_fail("matmul", av, bv);
  Tensor out({m, n2});
  // ikj order keeps the inner loop contiguous in both B and the output.
  for (size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n2;
    const double* arow = av.data() + i * k;
    for (size_t kk = 0; kk < k; ++kk) {
      double aik = arow[kk];
      if (aik == 0.0) continue;
      const double* brow = bv.data() + kk * n2;
      for (size_t j = 0; j < n2; ++j) orow[j] += aik * brow[j];
    }
  }
  auto node = make_node(std::move(out), {a.node(), b.node()}, "matmul");
  node->backprop = [m, k, n2](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& av2 = self.inputs[0]->value;
    const Tensor& bv2 = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad) {
      Tensor& ga = grad_of(self.inputs[0]);  // gA += G B^T
      for (size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n2;
        double* garow = ga.data() + i * k;
        for (size_t kk = 0; kk < k; ++kk) {
          const double* brow = bv2.data() + kk * n2;
          double acc = 0.0;
          for (size_t j = 0; j < n2; ++j) acc += grow[j] * brow[j];
          garow[kk] += acc;
        }
      }
    }
    if (self.inputs[1]->requires_grad) {
      Tensor& gb = grad_of(self.inputs[1]);  // gB += A^T G
      for (size_t i = 0; i < m; ++i) {
        const double* arow = av2.data() + i * k;
        const double* grow = g.data() + i * n2;
        for (size_t kk = 0; kk < k; ++kk) {
          double aik = arow[kk];
          if (aik == 0.0) continue;
          double* gbrow = gb.data() + kk * n2;
          for (size_t j = 0; j < n2; ++j) gbrow[j] += aik * grow[j];
        }
      }
    }
  };
  return Variable(node);
}

Variable transpose(const Variable& a) {
  require_rank(a, 2, "transpose");
  const Tensor& av = a.value();
  size_t m = av.dim(0), n = av.dim(1);
  Tensor out({n, m});
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
  auto node = make_node(std::move(out), {a.node()}, "transpose");
  node->backprop = [m, n](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    Tensor& ga = grad_of(self.inputs[0]);
    const Tensor& g = self.grad;
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
  };
  return Variable(node);
}

Variable matvec(const Variable& w, const Variable& x) {
  require_rank(w, 2, "matvec");
  require_rank(x, 1, "matvec");
  const Tensor& wv = w.value();
  const Tensor& xv = x.value();
  size_t m = wv.dim(0), k = wv.dim(1);
  if (xv.dim(0) != k) shape_fail("matvec", wv, xv);
  Tensor out({m});
  for (size_t i = 0; i < m; ++i) {
    const double* row = wv.data() + i * k;
    double acc = 0.0;
    for (size_t j = 0; j < k; ++j) acc += row[j] * xv[j];
    out[i] = acc;
  }
  auto node = make_node(std::move(out), {w.node(), x.node()}, "matvec");
  node->backprop = [m, k](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& wv2 = self.inputs[0]->value;
    const Tensor& xv2 = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad) {
      Tensor& gw = grad_of(self.inputs[0]);  // gW += g x^T
      for (size_t i = 0; i < m; ++i) {
        double gi = g[i];
        if (gi == 0.0) continue;
        double* row = gw.data() + i * k;
        for (size_t j = 0; j < k; ++j) row[j] += gi * xv2[j];
      }
    }
    if (self.inputs[1]->requires_grad) {
      Tensor& gx = grad_of(self.inputs[1]);  // gx += W^T g
      for (size_t i = 0; i < m; ++i) {
        double gi = g[i];
        if (gi == 0.0) continue;
        const double* row = wv2.data() + i * k;
        for (size_t j = 0; j < k; ++j) gx[j] += gi * row[j];
      }
    }
  };
  return Variable(node);
}

Variable matvec_t(const Variable& m, const Variable& v) {
  require_rank(m, 2, "matvec_t");
  require_rank(v, 1, "matvec_t");
  const Tensor& mv = m.value();
  const Tensor& vv = v.value();
  size_t n = mv.dim(0), d = mv.dim(1);
  if (vv.dim(0) != n) shape_fail("matvec_t", mv, vv);
  Tensor out({d});
  for (size_t i = 0; i < n; ++i) {
    double vi = vv[i];
    if (vi == 0.0) continue;
    const double* row = mv.data() + i * d;
    for (size_t j = 0; j < d; ++j) out[j] += vi * row[j];
  }
  auto node = make_node(std::move(out), {m.node(), v.node()}, "matvec_t");
  node->backprop = [n, d](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& mv2 = self.inputs[0]->value;
    const Tensor& vv2 = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad) {
      Tensor& gm = grad_of(self.inputs[0]);  // gM[i][j] += v[i] g[j]
      for (size_t i = 0; i < n; ++i) {
        double vi = vv2[i];
        if (vi == 0.0) continue;
        double* row = gm.data() + i * d;
        for (size_t j = 0; j < d; ++j) row[j] += vi * g[j];
      }
    }
    if (self.inputs[1]->requires_grad) {
      Tensor& gv = grad_of(self.inputs[1]);  // gv += M g
      for (size_t i = 0; i < n; ++i) {
        const double* row = mv2.data() + i * d;
        double acc = 0.0;
        for (size_t j = 0; j < d; ++j) acc += row[j] * g[j];
        gv[i] += acc;
      }
    }
  };
  return Variable(node);
}

Variable linear_rows(const Variable& x, const Variable& w, const Variable& b) {
  require_rank(x, 2, "linear_rows");
  require_rank(w, 2, "linear_rows");
  require_rank(b, 1, "linear_rows");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  size_t rows = xv.dim(0), d = xv.dim(1), o = wv.dim(0);
  if (wv.dim(1) != d) shape_fail("linear_rows", xv, wv);
  if (bv.dim(0) != o) shape_fail("linear_rows", wv, bv);
  Tensor out({rows, o});
  for (size_t i = 0; i < rows; ++i) {
    const double* xrow = xv.data() + i * d;
    double* orow = out.data() + i * o;
    for (size_t j = 0; j < o; ++j) {
      const double* wrow = wv.data() + j * d;
      double acc = bv[j];
      for (size_t kk = 0; kk < d; ++kk) acc += wrow[kk] * xrow[kk];
      orow[j] = acc;
    }
  }
  auto node = make_node(std::move(out), {x.node(), w.node(), b.node()}, "linear_rows");
  node->backprop = [rows, d, o](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& xv2 = self.inputs[0]->value;
    const Tensor& wv2 = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad) {
      Tensor& gx = grad_of(self.inputs[0]);  // gX += G W
      for (size_t i = 0; i < rows; ++i) {
        const double* grow = g.data() + i * o;
        double* gxrow = gx.data() + i * d;
        for (size_t j = 0; j < o; ++j) {
          double gij = grow[j];
          if (gij == 0.0) continue;
          const double* wrow = wv2.data() + j * d;
          for (size_t kk = 0; kk < d; ++kk) gxrow[kk] += gij * wrow[kk];
        }
      }
    }
    if (self.inputs[1]->requires_grad) {
      Tensor& gw = grad_of(self.inputs[1]);  // gW += G^T X
      for (size_t i = 0; i < rows; ++i) {
        const double* grow = g.data() + i * o;
        const double* xrow = xv2.data() + i * d;
        for (size_t j = 0; j < o; ++j) {
          double gij = grow[j];
          if (gij == 0.0) continue;
          double* gwrow = gw.data() + j * d;
          for (size_t kk = 0; kk < d; ++kk) gwrow[kk] += gij * xrow[kk];
        }
      }
    }
    if (self.inputs[2]->requires_grad) {
      Tensor& gb = grad_of(self.inputs[2]);  // gb += column sums of G
      for (size_t i = 0; i < rows; ++i) {
        const double* grow = g.data() + i * o;
        for (size_t j = 0; j < o; ++j) gb[j] += grow[j];
      }
    }
  };
  return Variable(node);
}

Variable row_dot_products(const Variable& a, const Variable& b, double s) {
  require_rank(a, 2, "row_dot_products");
  require_rank(b, 2, "row_dot_products");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  size_t m = av.dim(0), k = av.dim(1), n = bv.dim(0);
  if (bv.dim(1) != k) shape_fail("row_dot_products", av, bv);
  Tensor out({m, n});
  for (size_t i = 0; i < m; ++i) {
    const double* arow = av.data() + i * k;
    for (size_t j = 0; j < n; ++j) {
      const double* brow = bv.data() + j * k;
      double acc = 0.0;
      for (size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      out.at(i, j) = s * acc;
    }
  }
  auto node = make_node(std::move(out), {a.node(), b.node()}, "row_dot_products");
  node->backprop = [m, k, n, s](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& av2 = self.inputs[0]->value;
    const Tensor& bv2 = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad) {
      Tensor& ga = grad_of(self.inputs[0]);
      for (size_t i = 0; i < m; ++i) {
        double* garow = ga.data() + i * k;
        for (size_t j = 0; j < n; ++j) {
          double gij = s * g.at(i, j);
          if (gij == 0.0) continue;
          const double* brow = bv2.data() + j * k;
          for (size_t kk = 0; kk < k; ++kk) garow[kk] += gij * brow[kk];
        }
      }
    }
    if (self.inputs[1]->requires_grad) {
      Tensor& gb = grad_of(self.inputs[1]);
      for (size_t j = 0; j < n; ++j) {
        double* gbrow = gb.data() + j * k;
        for (size_t i = 0; i < m; ++i) {
          double gij = s * g.at(i, j);
          if (gij == 0.0) continue;
          const double* arow = av2.data() + i * k;
          for (size_t kk = 0; kk < k; ++kk) gbrow[kk] += gij * arow[kk];
        }
      }
    }
  };
  return Variable(node);
}

Variable concat(const std::vector<Variable>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  size_t total = 0;
  std::vector<std::shared_ptr<Node>> ins;
  ins.reserve(parts.size());
  for (const auto& p : parts) {
    require_rank(p, 1, "concat");
    total += p.value().dim(0);
    ins.push_back(p.node());
  }
  Tensor out({total});
  size_t off = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    std::memcpy(out.data() + off, v.data(), v.numel() * sizeof(double));
    off += v.numel();
  }
  auto node = make_node(std::move(out), std::move(ins), "concat");
  node->backprop = [](Node& self) {
    const Tensor& g = self.grad;
    size_t off2 = 0;
    for (auto& in : self.inputs) {
      size_t n = in->value.numel();
      if (in->requires_grad) {
        Tensor& gi = grad_of(in);
        for (size_t i = 0; i < n; ++i) gi[i] += g[off2 + i];
      }
      off2 += n;
    }
  };
  return Variable(node);
}

Variable concat_cols(const Variable& a, const Variable& b) {
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.dim(0) != bv.dim(0)) shape_fail("concat_cols", av, bv);
  size_t rows = av.dim(0), p = av.dim(1), q = bv.dim(1);
  Tensor out({rows, p + q});
  for (size_t i = 0; i < rows; ++i) {
    std::memcpy(out.data() + i * (p + q), av.data() + i * p, p * sizeof(double));
    std::memcpy(out.data() + i * (p + q) + p, bv.data() + i * q, q * sizeof(double));
  }
  auto node = make_node(std::move(out), {a.node(), b.node()}, "concat_cols");
  node->backprop = [rows, p, q](Node& self) {
    const Tensor& g = self.grad;
    if (self.inputs[0]->requires_grad) {
      Tensor& ga = grad_of(self.inputs[0]);
      for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < p; ++j) ga.at(i, j) += g.at(i, j);
    }
    if (self.inputs[1]->requires_grad) {
      Tensor& gb = grad_of(self.inputs[1]);
      for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < q; ++j) gb.at(i, j) += g.at(i, p + j);
    }
  };
  return Variable(node);
}

Variable slice(const Variable& x, size_t start, size_t len) {
  require_rank(x, 1, "slice");
  const Tensor& xv = x.value();
  if (start + len > xv.dim(0)) {
    std::ostringstream os;
    os << "slice: range [" << start << ", " << start + len << ") out of bounds for "
       << xv.shape_str();
    throw IndexError(os.str());
  }
  Tensor out({len});
  std::memcpy(out.data(), xv.data() + start, len * sizeof(double));
  auto node = make_node(std::move(out), {x.node()}, "slice");
  node->backprop = [start, len](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    Tensor& gx = grad_of(self.inputs[0]);
    const Tensor& g = self.grad;
    for (size_t i = 0; i < len; ++i) gx[start + i] += g[i];
  };
  return Variable(node);
}

Variable row(const Variable& x, size_t i) {
  require_rank(x, 2, "row");
  const Tensor& xv = x.value();
  size_t rows = xv.dim(0), d = xv.dim(1);
  if (i >= rows) {
    std::ostringstream os;
    os << "row: index " << i << " out of bounds for " << xv.shape_str();
    throw IndexError(os.str());
  }
  Tensor out({d});
  std::memcpy(out.data(), xv.data() + i * d, d * sizeof(double));
  auto node = make_node(std::move(out), {x.node()}, "row");
  node->backprop = [i, d](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    Tensor& gx = grad_of(self.inputs[0]);
    const Tensor& g = self.grad;
    for (size_t j = 0; j < d; ++j) gx[i * d + j] += g[j];
  };
  return Variable(node);
}

Variable stack_rows(const std::vector<Variable>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  size_t d = rows[0].value().dim(0);
  std::vector<std::shared_ptr<Node>> ins;
  ins.reserve(rows.size());
  for (const auto& r : rows) {
    require_rank(r, 1, "stack_rows");
    if (r.value().dim(0) != d) shape_fail("stack_rows", rows[0].value(), r.value());
    ins.push_back(r.node());
  }
  Tensor out({rows.size(), d});
  for (size_t i = 0; i < rows.size(); ++i)
    std::memcpy(out.data() + i * d, rows[i].value().data(), d * sizeof(double));
  auto node = make_node(std::move(out), std::move(ins), "stack_rows");
  node->backprop = [d](Node& self) {
    const Tensor& g = self.grad;
    for (size_t i = 0; i < self.inputs.size(); ++i) {
      auto& in = self.inputs[i];
      if (!in->requires_grad) continue;
      Tensor& gi = grad_of(in);
      for (size_t j = 0; j < d; ++j) gi[j] += g[i * d + j];
    }
  };
  return Variable(node);
}

Variable reshape(const Variable& x, std::vector<size_t> shape) {
  size_t n = 1;
  for (size_t dmm : shape) n *= dmm;
  if (n != x.value().numel()) {
    std::ostringstream os;
    os << "reshape: cannot view " << x.value().shape_str() << " as requested shape";
    throw ShapeError(os.str());
  }
  std::vector<double> data(x.value().data(), x.value().data() + n);
  Tensor out(std::move(shape), std::move(data));
  auto node = make_node(std::move(out), {x.node()}, "reshape");
  node->backprop = [](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    Tensor& gx = grad_of(self.inputs[0]);
    const Tensor& g = self.grad;
    for (size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  };
  return Variable(node);
}

Variable sum(const Variable& x) {
  double acc = 0.0;
  const Tensor& xv = x.value();
  for (size_t i = 0; i < xv.numel(); ++i) acc += xv[i];
  auto node = make_node(Tensor::scalar(acc), {x.node()}, "sum");
  node->backprop = [](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    Tensor& gx = grad_of(self.inputs[0]);
    double g = self.grad[0];
    for (size_t i = 0; i < gx.numel(); ++i) gx[i] += g;
  };
  return Variable(node);
}

Variable softmax(const Variable& x) {
  require_rank(x, 1, "softmax");
  const Tensor& xv = x.value();
  size_t n = xv.dim(0);
  if (n == 0) throw ShapeError("softmax: empty input");
  double mx = xv[0];
  for (size_t i = 1; i < n; ++i) mx = std::max(mx, xv[i]);
  Tensor out({n});
  double z = 0.0;
  for (size_t i = 0; i < n; ++i) {
    out[i] = std::exp(xv[i] - mx);
    z += out[i];
  }
  for (size_t i = 0; i < n; ++i) {
    out[i] /= z;
    // Keep entries strictly positive even when exp underflows.
    if (out[i] <= 0.0) out[i] = std::numeric_limits<double>::denorm_min();
  }
  auto node = make_node(std::move(out), {x.node()}, "softmax");
  node->backprop = [n](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    Tensor& gx = grad_of(self.inputs[0]);
    const Tensor& g = self.grad;
    const Tensor& y = self.value;
    double dot = 0.0;
    for (size_t i = 0; i < n; ++i) dot += g[i] * y[i];
    for (size_t i = 0; i < n; ++i) gx[i] += y[i] * (g[i] - dot);
  };
  return Variable(node);
}

namespace {
double vec_norm(const Tensor& t, size_t off, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += t[off + i] * t[off + i];
  return std::sqrt(acc);
}
}  // namespace

Variable l2_normalize(const Variable& x) {
  require_rank(x, 1, "l2_normalize");
  const Tensor& xv = x.value();
  size_t n = xv.dim(0);
  double norm = vec_norm(xv, 0, n);
  if (norm < kNormEps) throw NormError("l2_normalize: input norm below 1e-12");
  Tensor out({n});
  for (size_t i = 0; i < n; ++i) out[i] = xv[i] / norm;
  auto node = make_node(std::move(out), {x.node()}, "l2_normalize");
  node->backprop = [n, norm](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    Tensor& gx = grad_of(self.inputs[0]);
    const Tensor& g = self.grad;
    const Tensor& y = self.value;
    double dot = 0.0;
    for (size_t i = 0; i < n; ++i) dot += g[i] * y[i];
    for (size_t i = 0; i < n; ++i) gx[i] += (g[i] - y[i] * dot) / norm;
  };
  return Variable(node);
}

Variable l2_normalize_rows(const Variable& x) {
  require_rank(x, 2, "l2_normalize_rows");
  const Tensor& xv = x.value();
  size_t rows = xv.dim(0), n = xv.dim(1);
  Tensor out({rows, n});
  std::vector<double> norms(rows);
  for (size_t r = 0; r < rows; ++r) {
    double norm = vec_norm(xv, r * n, n);
    if (norm < kNormEps) {
      std::ostringstream os;
      os << "l2_normalize_rows: row " << r << " has norm below 1e-12";
      throw NormError(os.str());
    }
    norms[r] = norm;
    for (size_t i = 0; i < n; ++i) out[r * n + i] = xv[r * n + i] / norm;
  }
  auto node = make_node(std::move(out), {x.node()}, "l2_normalize_rows");
  node->backprop = [rows, n, norms](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    Tensor& gx = grad_of(self.inputs[0]);
    const Tensor& g = self.grad;
    const Tensor& y = self.value;
    for (size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (size_t i = 0; i < n; ++i) dot += g[r * n + i] * y[r * n + i];
      for (size_t i = 0; i < n; ++i)
        gx[r * n + i] += (g[r * n + i] - y[r * n + i] * dot) / norms[r];
    }
  };
  return Variable(node);
}

Variable cross_entropy(const Variable& p, size_t y) {
  require_rank(p, 1, "cross_entropy");
  const Tensor& pv = p.value();
  size_t n = pv.dim(0);
  if (y >= n) {
    std::ostringstream os;
    os << "cross_entropy: class index " << y << " out of range for " << n
       << " classes";
    throw IndexError(os.str());
  }
  double py = std::max(pv[y], kLogEps);
  auto node = make_node(Tensor::scalar(-std::log(py)), {p.node()}, "cross_entropy");
  node->backprop = [y](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    Tensor& gp = grad_of(self.inputs[0]);
    double pval = self.inputs[0]->value[y];
    if (pval >= kLogEps) gp[y] += -self.grad[0] / pval;
    // Below the clamp the loss is constant in p[y]; the subgradient is 0.
  };
  return Variable(node);
}

Variable dropout(const Variable& x, double p, RngStream& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0, 1)");
  if (p == 0.0) return x;
  const Tensor& xv = x.value();
  size_t n = xv.numel();
  double scale_keep = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(n);
  Tensor out = xv;
  for (size_t i = 0; i < n; ++i) {
    double keep = rng.next_double() >= p ? scale_keep : 0.0;
    (*mask)[i] = keep;
    out[i] *= keep;
  }
  auto node = make_node(std::move(out), {x.node()}, "dropout");
  node->backprop = [mask](Node& self) {
    if (!self.inputs[0]->requires_grad) return;
    Tensor& gx = grad_of(self.inputs[0]);
    const Tensor& g = self.grad;
    for (size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * (*mask)[i];
  };
  return Variable(node);
}

std::pair<Variable, Variable> lstm_cell(const Variable& x, const Variable& h_prev,
                                        const Variable& c_prev, const Variable& w_ih,
                                        const Variable& w_hh, const Variable& b) {
  size_t hidden = h_prev.value().dim(0);
  Variable z = add(add(matvec(w_ih, x), matvec(w_hh, h_prev)), b);
  if (z.value().dim(0) != 4 * hidden) {
    throw ShapeError("lstm_cell: gate pre-activation size " +
                     z.value().shape_str() + " does not match 4x hidden size");
  }
  Variable i_gate = sigmoid(slice(z, 0, hidden));
  Variable f_gate = sigmoid(slice(z, hidden, hidden));
  Variable g_cand = tanh_op(slice(z, 2 * hidden, hidden));
  Variable o_gate = sigmoid(slice(z, 3 * hidden, hidden));
  Variable c = add(mul(f_gate, c_prev), mul(i_gate, g_cand));
  Variable h = mul(o_gate, tanh_op(c));
  return {h, c};
}

namespace {

void backward_sweep(const Variable& root, bool reset_grads) {
  if (!root.defined()) throw ShapeError("backward: undefined root");
  if (root.value().numel() != 1) {
    throw ShapeError("backward: root must be scalar, got " +
                     root.value().shape_str());
  }
  // Iterative post-order DFS; yields a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    size_t next_child;
  };
  std::vector<Frame> stack;
  stack.push_back({root.node().get(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_child < f.node->inputs.size()) {
      Node* child = f.node->inputs[f.next_child++].get();
      if (visited.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (reset_grads || !n->grad.defined()) n->grad = Tensor::zeros(n->value.shape());
  }
  root.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->requires_grad) n->backprop(*n);
  }
}

}  // namespace

void backward(const Variable& root) { backward_sweep(root, true); }

void backward_accumulate(const Variable& root) { backward_sweep(root, false); }

}  // namespace dcnav::ag
