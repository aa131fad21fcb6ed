#pragma once

#include <vector>

#include "comg/tensor.hpp"

namespace comg {

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// a * s with a learnable scalar s (shape {1}); differentiable in both
Tensor scale_by(const Tensor& a, const Tensor& s);
Tensor add_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& x);

// shape manipulation (rank-2 unless noted)
Tensor reshape(const Tensor& x, const Shape& shape);
Tensor transpose(const Tensor& x);
Tensor concat_rows(const std::vector<Tensor>& xs);
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor slice_rows(const Tensor& x, int start, int len);
Tensor slice_cols(const Tensor& x, int start, int len);

// reductions
Tensor sum(const Tensor& x);                 // any rank -> scalar
Tensor mean_pool(const Tensor& x, int axis);  // rank-2, reduces `axis` -> rank-1

// linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // [n,in]x[in,out]+[out]
Tensor embedding(const std::vector<int>& ids, const Tensor& table);

// convolution / image
// x: [Cin,H,W], k: [Cout,Cin,kh,kw], b: [Cout]
Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b, int stride, int padding);
// mask [1,H,W] broadcast over channels of x [C,H,W]; same-shape also allowed
Tensor pointwise_mul(const Tensor& x, const Tensor& m);

// normalization / activation over rows
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-8);
Tensor softmax(const Tensor& x, int axis);  // rank-2; axis 1 = rows, axis 0 = cols

// losses
// mean negative log-likelihood over rows whose target != ignore_id
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_id = -1);
// sum over rows of log softmax(logits_row)[target]
Tensor sequence_log_prob(const Tensor& logits, const std::vector<int>& targets);
// 1 - cos(a,b), clamped to [0,2]; near-zero norms yield loss 1 with zero grad
Tensor cosine_loss(const Tensor& a, const Tensor& b, double norm_eps = 1e-8);

// constants
Tensor sinusoidal_positions(int n, int dim);  // [n,dim], no grad

// one sinusoidal position value; shared by the graph path and the
// incremental decoder so both produce identical encodings
double sinusoid_position_value(int t, int j, int dim);

}  // namespace comg
