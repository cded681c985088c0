#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "kerngen/nda.hpp"

using namespace kerngen;

TEST_CASE("dims parse/print round-trip") {
  for (std::string const text : {"Y:X:C=205:205:3", "N=1", "B:Y:X:C=32:205:205:3", "M:K=10000:147"}) {
    CHECK(dims_t::parse(text).str() == text);
  }
}

TEST_CASE("dims validation") {
  CHECK_THROWS(dims_t::parse("Y:X=4"));         // count mismatch
  CHECK_THROWS(dims_t::parse("Y:Y=2:3"));       // duplicate name
  CHECK_THROWS(dims_t::parse("Y:X=0:3"));       // zero size
  CHECK_THROWS(dims_t::parse("YX23"));          // no '='
  CHECK_THROWS(dims_t::parse("Y:X=2:-3"));      // negative
  CHECK_THROWS((dims_t{{"A", 1ll << 32}, {"B", 1ll << 32}}));  // product overflow
}

TEST_CASE("dims_product") {
  CHECK(dims_product(dims_t::parse("Y:X:C=205:205:3")) == 126075);
  CHECK(dims_product(dims_t::parse("Y:X:C=100:100:96")) == 960000);
  CHECK(dims_product(dims_t::parse("N=1")) == 1);
}

TEST_CASE("slice removes bound axes and preserves elements") {
  // filts(96:7:7:3), bind OC=0 -> 7:7:3
  nda_t filts{dims_t{{"OC", 96}, {"KY", 7}, {"KX", 7}, {"IC", 3}}};
  for (size_t i = 0; i != filts.data().size(); ++i) { filts.data()[i] = (float)(i % 101); }
  nda_t const s = filts.slice({{"OC", 0}});
  CHECK(s.dims().str() == "KY:KX:IC=7:7:3");
  for (int64_t i = 0; i != s.elems(); ++i) { CHECK(s.data()[(size_t)i] == filts.data()[(size_t)i]); }

  nda_t const s2 = filts.slice({{"OC", 5}});
  CHECK(s2.data()[0] == filts.at({5, 0, 0, 0}));
}

TEST_CASE("slice with empty bindings is identity") {
  nda_t a{dims_t{{"Y", 3}, {"X", 2}}};
  for (size_t i = 0; i != a.data().size(); ++i) { a.data()[i] = (float)i; }
  nda_t const s = a.slice({});
  CHECK(s.dims() == a.dims());
  CHECK(s.data() == a.data());
}

TEST_CASE("slice range equals brute-force gather") {
  // in(205:205:3) bind Y=[0,7), X=[0,7) -> 7:7:3, checked against an
  // independent index-enumeration loop
  nda_t in{dims_t{{"Y", 205}, {"X", 205}, {"C", 3}}};
  for (size_t i = 0; i != in.data().size(); ++i) { in.data()[i] = (float)((i * 7 + 3) % 997); }
  nda_t const s = in.slice({{"Y", 0, 7}, {"X", 0, 7}});
  CHECK(s.dims().str() == "Y:X:C=7:7:3");
  for (int64_t y = 0; y != 7; ++y) {
    for (int64_t x = 0; x != 7; ++x) {
      for (int64_t c = 0; c != 3; ++c) { CHECK(s.at({y, x, c}) == in.at({y, x, c})); }
    }
  }
}

TEST_CASE("slice-then-flatten equals direct flat index arithmetic, exhaustive on 4:4:4:4") {
  nda_t a{dims_t{{"A", 4}, {"B", 4}, {"C", 4}, {"D", 4}}};
  for (size_t i = 0; i != a.data().size(); ++i) { a.data()[i] = (float)i; }
  for (int64_t ai = 0; ai != 4; ++ai) {
    for (int64_t bi = 0; bi != 4; ++bi) {
      nda_t const s = a.slice({{"A", ai}, {"B", bi}});
      for (int64_t ci = 0; ci != 4; ++ci) {
        for (int64_t di = 0; di != 4; ++di) {
          CHECK(s.at({ci, di}) == (float)(((ai * 4 + bi) * 4 + ci) * 4 + di));
        }
      }
    }
  }
}

TEST_CASE("slice errors") {
  nda_t a{dims_t{{"Y", 3}, {"X", 2}}};
  CHECK_THROWS(a.slice({{"Z", 0}}));      // unknown axis
  CHECK_THROWS(a.slice({{"Y", 3}}));      // out of bounds
  CHECK_THROWS(a.slice({{"X", 0, 5}}));   // range out of bounds
}

TEST_CASE("reshape keeps flat order") {
  // 2:3 of values 0..5 -> 3:2, flat order unchanged
  nda_t a{dims_t{{"Y", 2}, {"X", 3}}, {0, 1, 2, 3, 4, 5}};
  nda_t const r = a.reshape(dims_t{{"P", 3}, {"Q", 2}});
  CHECK(r.data() == a.data());
  CHECK(r.dims().str() == "P:Q=3:2");
  CHECK(a.reshape(a.dims()).data() == a.data());
  CHECK_THROWS(a.reshape(dims_t{{"P", 7}}));
}

TEST_CASE("reshape round-trip is the identity") {
  nda_t a{dims_t{{"M", 10}, {"N", 6}}};
  for (size_t i = 0; i != a.data().size(); ++i) { a.data()[i] = (float)(i * 3 % 17); }
  nda_t const back = a.reshape(dims_t{{"Z", 60}}).reshape(a.dims());
  CHECK(back.dims() == a.dims());
  CHECK(back.data() == a.data());
}
