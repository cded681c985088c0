#include "kerngen/nda.hpp"

#include <algorithm>

namespace kerngen {

dims_t::dims_t(std::initializer_list<axis_t> axes) : axes_(axes) { validate(); }
dims_t::dims_t(std::vector<axis_t> axes) : axes_(std::move(axes)) { validate(); }

void dims_t::validate() const {
  for (size_t i = 0; i != axes_.size(); ++i) {
    axis_t const& a = axes_[i];
    if (a.name.empty()) { rt_err("empty axis name"); }
    if (a.size < 1) { rt_err(strprintf("axis %s has size %lld; sizes must be >= 1", a.name.c_str(), (long long)a.size)); }
    for (size_t j = i + 1; j != axes_.size(); ++j) {
      if (axes_[j].name == a.name) { rt_err("duplicate axis name '" + a.name + "'"); }
    }
  }
  product();  // reject on overflow
}

static std::vector<std::string> split_on(std::string const& s, char const sep) {
  std::vector<std::string> parts;
  size_t pos = 0;
  for (;;) {
    size_t const next = s.find(sep, pos);
    parts.push_back(s.substr(pos, next == std::string::npos ? next : next - pos));
    if (next == std::string::npos) { break; }
    pos = next + 1;
  }
  return parts;
}

dims_t dims_t::parse(std::string const& text) {
  size_t const eq = text.find('=');
  if (eq == std::string::npos) { rt_err("bad dims syntax (no '='): " + text); }
  std::vector<std::string> const names = split_on(text.substr(0, eq), ':');
  std::vector<std::string> const sizes = split_on(text.substr(eq + 1), ':');
  if (names.size() != sizes.size()) {
    rt_err(strprintf("bad dims syntax: %zu names but %zu sizes in '%s'", names.size(), sizes.size(), text.c_str()));
  }
  std::vector<axis_t> axes;
  for (size_t i = 0; i != names.size(); ++i) {
    if (sizes[i].empty() || sizes[i].find_first_not_of("0123456789") != std::string::npos) {
      rt_err("bad dims size '" + sizes[i] + "' in '" + text + "'");
    }
    axes.push_back({names[i], std::stoll(sizes[i])});
  }
  return dims_t(std::move(axes));
}

std::string dims_t::str() const {
  std::string names, sizes;
  for (size_t i = 0; i != axes_.size(); ++i) {
    if (i) { names += ':'; sizes += ':'; }
    names += axes_[i].name;
    sizes += std::to_string(axes_[i].size);
  }
  return names + "=" + sizes;
}

bool dims_t::has(std::string const& name) const {
  return std::any_of(axes_.begin(), axes_.end(), [&](axis_t const& a) { return a.name == name; });
}

size_t dims_t::index_of(std::string const& name) const {
  for (size_t i = 0; i != axes_.size(); ++i) {
    if (axes_[i].name == name) { return i; }
  }
  rt_err("unknown axis '" + name + "' in dims " + str());
}

int64_t dims_t::size_of(std::string const& name) const { return axes_[index_of(name)].size; }

int64_t dims_t::product() const {
  int64_t p = 1;
  for (axis_t const& a : axes_) { p = checked_mul(p, a.size, "dims product"); }
  return p;
}

std::vector<int64_t> dims_t::strides() const {
  std::vector<int64_t> s(axes_.size(), 1);
  for (size_t i = axes_.size(); i-- > 1;) { s[i - 1] = checked_mul(s[i], axes_[i].size, "dims stride"); }
  return s;
}

bool dims_t::operator==(dims_t const& o) const {
  if (axes_.size() != o.axes_.size()) { return false; }
  for (size_t i = 0; i != axes_.size(); ++i) {
    if (axes_[i].name != o.axes_[i].name || axes_[i].size != o.axes_[i].size) { return false; }
  }
  return true;
}

int64_t dims_product(dims_t const& d) { return d.product(); }

nda_t::nda_t(dims_t dims) : dims_(std::move(dims)), data_((size_t)dims_.product(), 0.0f) {}

nda_t::nda_t(dims_t dims, std::vector<float> data) : dims_(std::move(dims)), data_(std::move(data)) {
  if ((int64_t)data_.size() != dims_.product()) {
    rt_err(strprintf("data length %zu does not match dims %s (%lld elems)", data_.size(), dims_.str().c_str(),
                     (long long)dims_.product()));
  }
}

int64_t nda_t::flat_index(std::vector<int64_t> const& idx) const {
  if (idx.size() != dims_.rank()) { rt_err(strprintf("index rank %zu vs dims rank %zu", idx.size(), dims_.rank())); }
  std::vector<int64_t> const st = dims_.strides();
  int64_t flat = 0;
  for (size_t i = 0; i != idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= dims_.axis(i).size) {
      rt_err(strprintf("index %lld out of bounds for axis %s (size %lld)", (long long)idx[i], dims_.axis(i).name.c_str(),
                       (long long)dims_.axis(i).size));
    }
    flat += idx[i] * st[i];
  }
  return flat;
}

float nda_t::at(std::vector<int64_t> const& idx) const { return data_[(size_t)flat_index(idx)]; }
void nda_t::set(std::vector<int64_t> const& idx, float const v) { data_[(size_t)flat_index(idx)] = v; }

nda_t nda_t::slice(std::vector<axis_binding_t> const& bindings) const {
  // per-axis [lo,hi) plus removed-flag; unbound axes keep full extent
  std::vector<int64_t> lo(dims_.rank(), 0);
  std::vector<int64_t> hi(dims_.rank());
  std::vector<bool> removed(dims_.rank(), false);
  for (size_t i = 0; i != dims_.rank(); ++i) { hi[i] = dims_.axis(i).size; }
  for (axis_binding_t const& b : bindings) {
    size_t const ax = dims_.index_of(b.name);
    int64_t const b_hi = b.hi ? *b.hi : b.lo + 1;
    if (b.lo < 0 || b_hi > dims_.axis(ax).size || b.lo >= b_hi) {
      rt_err(strprintf("slice bounds [%lld,%lld) out of range for axis %s (size %lld)", (long long)b.lo, (long long)b_hi,
                       b.name.c_str(), (long long)dims_.axis(ax).size));
    }
    lo[ax] = b.lo;
    hi[ax] = b_hi;
    removed[ax] = !b.hi.has_value();
  }
  std::vector<axis_t> out_axes;
  for (size_t i = 0; i != dims_.rank(); ++i) {
    if (!removed[i]) { out_axes.push_back({dims_.axis(i).name, hi[i] - lo[i]}); }
  }
  if (out_axes.empty()) { out_axes.push_back({"E", 1}); }  // fully-bound slice degenerates to one element
  nda_t out{dims_t(out_axes)};

  std::vector<int64_t> const st = dims_.strides();
  std::vector<int64_t> cur = lo;
  size_t w = 0;
  for (;;) {
    int64_t flat = 0;
    for (size_t i = 0; i != cur.size(); ++i) { flat += cur[i] * st[i]; }
    out.data()[w++] = data_[(size_t)flat];
    // odometer over the sliced extents, last axis fastest
    size_t i = cur.size();
    for (;;) {
      if (i == 0) { return out; }
      --i;
      if (++cur[i] < hi[i]) { break; }
      cur[i] = lo[i];
    }
  }
}

nda_t nda_t::reshape(dims_t const& new_dims) const {
  if (new_dims.product() != dims_.product()) {
    rt_err(strprintf("reshape element-count mismatch: %s (%lld) vs %s (%lld)", dims_.str().c_str(), (long long)dims_.product(),
                     new_dims.str().c_str(), (long long)new_dims.product()));
  }
  return nda_t(new_dims, data_);
}

}  // namespace kerngen
