#pragma once

#include "geosent/nn/tensor.hpp"

namespace geosent::nn {

/// One LSTM direction. Gate blocks are laid out [input, forget, candidate,
/// output] along the 4u axis of every tensor.
template <typename Scalar>
struct LstmParams {
  Matrix<Scalar> Wx;    // d x 4u
  Matrix<Scalar> Wh;    // u x 4u
  RowVector<Scalar> b;  // 4u

  Eigen::Index units() const { return Wh.rows(); }
};

/// Per-step activations kept for backpropagation through time. Row t is the
/// t-th processed step, so for the reverse direction row 0 holds the last
/// input position.
template <typename Scalar>
struct LstmTrace {
  Matrix<Scalar> gates;   // L x 4u, post-activation
  Matrix<Scalar> cell;    // (L+1) x u, row 0 is the zero initial state
  Matrix<Scalar> hidden;  // (L+1) x u
  Matrix<Scalar> cell_tanh;  // L x u
  bool reverse = false;

  RowVector<Scalar> final_hidden() const { return hidden.row(hidden.rows() - 1); }
};

template <typename Scalar>
void check_lstm_shapes(const Matrix<Scalar>& x, const LstmParams<Scalar>& p) {
  const Eigen::Index u = p.units();
  if (p.Wx.rows() != x.cols() || p.Wx.cols() != 4 * u || p.Wh.cols() != 4 * u || p.b.cols() != 4 * u) {
    throw ShapeError("lstm parameters do not match input width " + std::to_string(x.cols()));
  }
}

template <typename Scalar>
LstmTrace<Scalar> lstm_forward(const Matrix<Scalar>& x, const LstmParams<Scalar>& p, bool reverse) {
  check_lstm_shapes(x, p);
  const Eigen::Index L = x.rows();
  const Eigen::Index u = p.units();
  LstmTrace<Scalar> tr;
  tr.reverse = reverse;
  tr.gates.resize(L, 4 * u);
  tr.cell = Matrix<Scalar>::Zero(L + 1, u);
  tr.hidden = Matrix<Scalar>::Zero(L + 1, u);
  tr.cell_tanh.resize(L, u);
  // Input projections for every position in one product.
  Matrix<Scalar> projected = x * p.Wx;
  projected.rowwise() += p.b;
  for (Eigen::Index t = 0; t < L; ++t) {
    const Eigen::Index pos = reverse ? L - 1 - t : t;
    RowVector<Scalar> a = projected.row(pos) + tr.hidden.row(t) * p.Wh;
    auto g = tr.gates.row(t);
    g.segment(0, 2 * u) = sigmoid(a.segment(0, 2 * u));
    g.segment(2 * u, u) = a.segment(2 * u, u).array().tanh().matrix();
    g.segment(3 * u, u) = sigmoid(a.segment(3 * u, u));
    tr.cell.row(t + 1) = g.segment(u, u).cwiseProduct(tr.cell.row(t)) +
                         g.segment(0, u).cwiseProduct(g.segment(2 * u, u));
    tr.cell_tanh.row(t) = tr.cell.row(t + 1).array().tanh().matrix();
    tr.hidden.row(t + 1) = g.segment(3 * u, u).cwiseProduct(tr.cell_tanh.row(t));
  }
  return tr;
}

template <typename Scalar>
struct LstmGrads {
  Matrix<Scalar> dx;
  Matrix<Scalar> dWx;
  Matrix<Scalar> dWh;
  RowVector<Scalar> db;
};

/// Backpropagation through time from a gradient on the final hidden state.
template <typename Scalar>
LstmGrads<Scalar> lstm_backward(const Matrix<Scalar>& x, const LstmParams<Scalar>& p,
                                const LstmTrace<Scalar>& tr, const RowVector<Scalar>& d_final) {
  const Eigen::Index L = x.rows();
  const Eigen::Index u = p.units();
  Matrix<Scalar> d_pre(L, 4 * u);  // gradient on gate pre-activations, per processed step
  RowVector<Scalar> dh = d_final;
  RowVector<Scalar> dc = RowVector<Scalar>::Zero(u);
  for (Eigen::Index t = L - 1; t >= 0; --t) {
    const auto g = tr.gates.row(t);
    const auto i = g.segment(0, u).array();
    const auto f = g.segment(u, u).array();
    const auto cand = g.segment(2 * u, u).array();
    const auto o = g.segment(3 * u, u).array();
    const auto tc = tr.cell_tanh.row(t).array();
    dc.array() += dh.array() * o * (Scalar(1) - tc * tc);
    auto da = d_pre.row(t);
    da.segment(0, u) = (dc.array() * cand * i * (Scalar(1) - i)).matrix();
    da.segment(u, u) = (dc.array() * tr.cell.row(t).array() * f * (Scalar(1) - f)).matrix();
    da.segment(2 * u, u) = (dc.array() * i * (Scalar(1) - cand * cand)).matrix();
    da.segment(3 * u, u) = (dh.array() * tc * o * (Scalar(1) - o)).matrix();
    dc = (dc.array() * f).matrix();
    dh = da * p.Wh.transpose();
  }
  // Reorder processed steps back to input positions for the input-side products.
  Matrix<Scalar> d_pre_pos(L, 4 * u);
  for (Eigen::Index t = 0; t < L; ++t) d_pre_pos.row(tr.reverse ? L - 1 - t : t) = d_pre.row(t);
  LstmGrads<Scalar> grads;
  grads.dWx.noalias() = x.transpose() * d_pre_pos;
  grads.dWh.noalias() = tr.hidden.topRows(L).transpose() * d_pre;
  grads.db = d_pre.colwise().sum();
  grads.dx.noalias() = d_pre_pos * p.Wx.transpose();
  return grads;
}

template <typename Scalar>
struct BiLstmTrace {
  LstmTrace<Scalar> forward;
  LstmTrace<Scalar> backward;
};

/// Concatenated final hidden states [forward | backward], length 2u.
template <typename Scalar>
RowVector<Scalar> bilstm(const Matrix<Scalar>& x, const LstmParams<Scalar>& fwd,
                         const LstmParams<Scalar>& bwd, BiLstmTrace<Scalar>* trace = nullptr) {
  auto tf = lstm_forward(x, fwd, false);
  auto tb = lstm_forward(x, bwd, true);
  const Eigen::Index u = fwd.units();
  if (bwd.units() != u) throw ShapeError("bilstm directions must have equal units");
  RowVector<Scalar> out(2 * u);
  out << tf.final_hidden(), tb.final_hidden();
  if (trace != nullptr) *trace = {std::move(tf), std::move(tb)};
  return out;
}

template <typename Scalar>
struct BiLstmGrads {
  Matrix<Scalar> dx;
  LstmGrads<Scalar> forward;
  LstmGrads<Scalar> backward;
};

template <typename Scalar>
BiLstmGrads<Scalar> bilstm_backward(const Matrix<Scalar>& x, const LstmParams<Scalar>& fwd,
                                    const LstmParams<Scalar>& bwd, const BiLstmTrace<Scalar>& trace,
                                    const RowVector<Scalar>& d_out) {
  const Eigen::Index u = fwd.units();
  BiLstmGrads<Scalar> g;
  g.forward = lstm_backward(x, fwd, trace.forward, RowVector<Scalar>(d_out.segment(0, u)));
  g.backward = lstm_backward(x, bwd, trace.backward, RowVector<Scalar>(d_out.segment(u, u)));
  g.dx = g.forward.dx + g.backward.dx;
  return g;
}

}  // namespace geosent::nn
