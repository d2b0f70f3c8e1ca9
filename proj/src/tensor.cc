// src/tensor.cc

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

#include "e2esv/tensor.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace e2esv {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

namespace {
constexpr uint32_t kTensorFormatVersion = 1;
constexpr std::size_t kMaxRank = 8;
}  // namespace

double Tensor::Scalar() const {
  if (!IsScalar())
    throw ShapeError("Scalar() on tensor of shape " + ShapeString(shape));
  return values[0];
}

void Tensor::EnsureGrad() {
  if (requires_grad && grad.size() != Size()) grad.assign(Size(), 0.0);
}

void Tensor::ZeroGrad() {
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
}

TensorPtr Tensor::Zeros(std::vector<std::size_t> shape) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->values.assign(t->Size(), 0.0);
  return t;
}

TensorPtr Tensor::Of(std::vector<std::size_t> shape,
                     std::vector<double> values) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->values = std::move(values);
  if (t->values.size() != t->Size())
    throw ShapeError("tensor of shape " + ShapeString(t->shape) + " needs " +
                     std::to_string(t->Size()) + " values, got " +
                     std::to_string(t->values.size()));
  return t;
}

TensorPtr Tensor::Param(std::vector<std::size_t> shape,
                        std::vector<double> values) {
  auto t = Of(std::move(shape), std::move(values));
  t->requires_grad = true;
  t->EnsureGrad();
  return t;
}

std::string ShapeString(const std::vector<std::size_t> &shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? " " : "") << shape[i];
  os << "]";
  return os.str();
}

TensorPtr ParamStore::Register(const std::string &name, TensorPtr t) {
  if (params_.count(name))
    throw DataError("parameter '" + name + "' registered twice");
  params_[name] = t;
  return t;
}

TensorPtr ParamStore::Get(const std::string &name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw DataError("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::ZeroGrad() {
  for (auto &kv : params_) kv.second->ZeroGrad();
}

void ParamStore::SgdStep(double lr) {
  for (auto &kv : params_) {
    Tensor &t = *kv.second;
    if (!t.requires_grad || t.grad.empty()) continue;
    for (std::size_t i = 0; i < t.values.size(); ++i)
      t.values[i] -= lr * t.grad[i];
  }
  ++step_;
}

namespace io {

void WriteU32(std::ostream &os, uint32_t v) {
  os.write(reinterpret_cast<const char *>(&v), sizeof(v));
}

uint32_t ReadU32(std::istream &is, const char *what) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char *>(&v), sizeof(v));
  if (!is) throw DataError(std::string("truncated stream while reading ") + what);
  return v;
}

void WriteU64(std::ostream &os, uint64_t v) {
  os.write(reinterpret_cast<const char *>(&v), sizeof(v));
}

uint64_t ReadU64(std::istream &is, const char *what) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char *>(&v), sizeof(v));
  if (!is) throw DataError(std::string("truncated stream while reading ") + what);
  return v;
}

void WriteF64(std::ostream &os, double v) {
  os.write(reinterpret_cast<const char *>(&v), sizeof(v));
}

double ReadF64(std::istream &is, const char *what) {
  double v = 0;
  is.read(reinterpret_cast<char *>(&v), sizeof(v));
  if (!is) throw DataError(std::string("truncated stream while reading ") + what);
  return v;
}

void WriteF64Array(std::ostream &os, const double *data, std::size_t n) {
  os.write(reinterpret_cast<const char *>(data),
           static_cast<std::streamsize>(n * sizeof(double)));
}

void ReadF64Array(std::istream &is, double *data, std::size_t n,
                  const char *what) {
  is.read(reinterpret_cast<char *>(data),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw DataError(std::string("truncated stream while reading ") + what);
}

void WriteString(std::ostream &os, const std::string &s) {
  if (s.size() > std::numeric_limits<uint32_t>::max())
    throw DataError("string too long to serialize");
  WriteU32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string ReadString(std::istream &is, const char *what) {
  uint32_t n = ReadU32(is, what);
  if (n > (1u << 26))
    throw DataError(std::string("implausible string length while reading ") +
                    what);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw DataError(std::string("truncated stream while reading ") + what);
  return s;
}

void WriteMagic(std::ostream &os, const char magic[4]) {
  os.write(magic, 4);
}

void ExpectMagic(std::istream &is, const char magic[4], const char *what) {
  char buf[4] = {0, 0, 0, 0};
  is.read(buf, 4);
  if (!is || std::memcmp(buf, magic, 4) != 0)
    throw DataError(std::string("bad magic for ") + what + " (expected '" +
                    std::string(magic, 4) + "')");
}

}  // namespace io

void WriteTensorBlock(std::ostream &os, const Tensor &t) {
  io::WriteMagic(os, "E2ET");
  io::WriteU32(os, kTensorFormatVersion);
  io::WriteU32(os, static_cast<uint32_t>(t.shape.size()));
  for (std::size_t d : t.shape) io::WriteU32(os, static_cast<uint32_t>(d));
  io::WriteF64Array(os, t.values.data(), t.values.size());
}

TensorPtr ReadTensorBlock(std::istream &is) {
  io::ExpectMagic(is, "E2ET", "tensor block");
  uint32_t version = io::ReadU32(is, "tensor version");
  if (version != kTensorFormatVersion)
    throw DataError("unsupported tensor format version " +
                    std::to_string(version));
  uint32_t rank = io::ReadU32(is, "tensor rank");
  if (rank > kMaxRank)
    throw DataError("implausible tensor rank " + std::to_string(rank));
  std::vector<std::size_t> shape(rank);
  std::size_t total = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    shape[i] = io::ReadU32(is, "tensor dim");
    total *= shape[i];
  }
  if (total > (std::size_t(1) << 30))
    throw DataError("implausible tensor size " + std::to_string(total));
  auto t = Tensor::Zeros(std::move(shape));
  io::ReadF64Array(is, t->values.data(), total, "tensor payload");
  return t;
}

void WriteNamedTensors(std::ostream &os,
                       const std::map<std::string, TensorPtr> &tensors) {
  io::WriteU32(os, static_cast<uint32_t>(tensors.size()));
  for (const auto &kv : tensors) {  // std::map iterates in name order
    io::WriteString(os, kv.first);
    WriteTensorBlock(os, *kv.second);
  }
}

std::map<std::string, TensorPtr> ReadNamedTensors(std::istream &is) {
  uint32_t count = io::ReadU32(is, "tensor section count");
  if (count > (1u << 20))
    throw DataError("implausible tensor count " + std::to_string(count));
  std::map<std::string, TensorPtr> out;
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = io::ReadString(is, "tensor name");
    if (out.count(name))
      throw DataError("duplicate tensor name '" + name + "' in stream");
    out[name] = ReadTensorBlock(is);
  }
  return out;
}

}  // namespace e2esv
