// include/e2esv/tensor.hpp

// Copyright 2026  The e2esv authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef E2ESV_TENSOR_HPP_
#define E2ESV_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "e2esv/common.hpp"

namespace e2esv {

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major f64 tensor doubling as an autodiff graph node.  Ops build
// nodes whose backward_step closures accumulate into the parents' grad
// buffers; Backward() (ops.hpp) runs the closures in reverse topological
// order and then drops the graph edges.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated lazily, only when requires_grad
  bool requires_grad = false;

  std::vector<TensorPtr> parents;
  std::function<void()> backward_step;

  std::size_t Size() const {
    std::size_t s = 1;
    for (std::size_t d : shape) s *= d;
    return s;
  }
  std::size_t Rank() const { return shape.size(); }
  bool IsScalar() const { return Size() == 1; }
  double Scalar() const;

  void EnsureGrad();  // allocates + zeroes grad if requires_grad
  void ZeroGrad();

  static TensorPtr Zeros(std::vector<std::size_t> shape);
  static TensorPtr Of(std::vector<std::size_t> shape,
                      std::vector<double> values);
  // A leaf that participates in gradient computation.
  static TensorPtr Param(std::vector<std::size_t> shape,
                         std::vector<double> values);
};

std::string ShapeString(const std::vector<std::size_t> &shape);

// Named collection of trainable leaves; one store is owned by one training
// loop.  SgdStep applies W <- W - lr * dW to every registered tensor that
// has a gradient and bumps the step counter.
class ParamStore {
 public:
  TensorPtr Register(const std::string &name, TensorPtr t);
  TensorPtr Get(const std::string &name) const;
  bool Has(const std::string &name) const { return params_.count(name) > 0; }
  const std::map<std::string, TensorPtr> &All() const { return params_; }
  void ZeroGrad();
  void SgdStep(double lr);
  int64_t StepCount() const { return step_; }

 private:
  std::map<std::string, TensorPtr> params_;
  int64_t step_ = 0;
};

// --- binary serialization -------------------------------------------------
//
// Tensor block: magic "E2ET", format version u32, rank u32, dims u32[],
// payload f64[], all little-endian.

void WriteTensorBlock(std::ostream &os, const Tensor &t);
TensorPtr ReadTensorBlock(std::istream &is);

// Named-tensor section: count u32, then per tensor a length-prefixed UTF-8
// name followed by a tensor block.  Entries are written in name order.
void WriteNamedTensors(std::ostream &os,
                       const std::map<std::string, TensorPtr> &tensors);
std::map<std::string, TensorPtr> ReadNamedTensors(std::istream &is);

// Low-level little-endian helpers shared by the model/feature file formats.
namespace io {
void WriteU32(std::ostream &os, uint32_t v);
uint32_t ReadU32(std::istream &is, const char *what);
void WriteU64(std::ostream &os, uint64_t v);
uint64_t ReadU64(std::istream &is, const char *what);
void WriteF64(std::ostream &os, double v);
double ReadF64(std::istream &is, const char *what);
void WriteF64Array(std::ostream &os, const double *data, std::size_t n);
void ReadF64Array(std::istream &is, double *data, std::size_t n,
                  const char *what);
void WriteString(std::ostream &os, const std::string &s);
std::string ReadString(std::istream &is, const char *what);
void WriteMagic(std::ostream &os, const char magic[4]);
void ExpectMagic(std::istream &is, const char magic[4], const char *what);
}  // namespace io

}  // namespace e2esv

#endif  // E2ESV_TENSOR_HPP_
