#ifndef KERNGEN_NDA_HPP
#define KERNGEN_NDA_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kerngen/common.hpp"

namespace kerngen {

// ordered list of named axes; e.g. Y:X:C=205:205:3
struct axis_t {
  std::string name;
  int64_t size = 0;
};

class dims_t {
 public:
  dims_t() = default;
  dims_t(std::initializer_list<axis_t> axes);
  explicit dims_t(std::vector<axis_t> axes);

  // textual syntax "Y:X:C=205:205:3"; parse/str round-trip exactly
  static dims_t parse(std::string const& text);
  std::string str() const;

  size_t rank() const { return axes_.size(); }
  axis_t const& axis(size_t i) const { return axes_.at(i); }
  std::vector<axis_t> const& axes() const { return axes_; }
  bool has(std::string const& name) const;
  size_t index_of(std::string const& name) const;  // errors if absent
  int64_t size_of(std::string const& name) const;

  int64_t product() const;  // element count; errors on overflow
  // row-major strides, last axis fastest-varying
  std::vector<int64_t> strides() const;

  bool operator==(dims_t const& o) const;

 private:
  void validate() const;
  std::vector<axis_t> axes_;
};

// a single-index or half-open-range binding for one named axis
struct axis_binding_t {
  std::string name;
  int64_t lo = 0;
  std::optional<int64_t> hi;  // unset: single index (axis removed); set: range [lo,hi)
};

// dense f32 ND-array, row-major in axis order. immutable-by-convention after fill.
class nda_t {
 public:
  nda_t() = default;
  explicit nda_t(dims_t dims);  // zero-filled
  nda_t(dims_t dims, std::vector<float> data);

  dims_t const& dims() const { return dims_; }
  std::vector<float> const& data() const { return data_; }
  std::vector<float>& data() { return data_; }
  int64_t elems() const { return (int64_t)data_.size(); }

  float at(std::vector<int64_t> const& idx) const;
  void set(std::vector<int64_t> const& idx, float v);
  int64_t flat_index(std::vector<int64_t> const& idx) const;

  // copy with single-index axes removed and ranged axes resized
  nda_t slice(std::vector<axis_binding_t> const& bindings) const;
  // same flat data, new dims; element counts must match
  nda_t reshape(dims_t const& new_dims) const;

 private:
  dims_t dims_;
  std::vector<float> data_;
};

int64_t dims_product(dims_t const& d);

}  // namespace kerngen

#endif
