#ifndef KERNGEN_TEMPLATE_HPP
#define KERNGEN_TEMPLATE_HPP

#include <map>
#include <string>
#include <vector>

#include "kerngen/common.hpp"

namespace kerngen {

// string-replacement template: body text with %(block_name) placeholders for
// generated code blocks and %(const_name) scalar substitutions
struct template_t {
  std::string name;
  std::string body;
  std::vector<std::string> required_blocks;
};

// pure, single-pass textual substitution; errors name the first unbound
// placeholder; the result never contains a residual "%(" sequence
std::string expand_template(template_t const& t, std::map<std::string, std::string> const& consts,
                            std::map<std::string, std::string> const& blocks);

// builtin kernel template bodies, by name
template_t const& builtin_template(std::string const& name);
std::vector<std::string> builtin_template_names();

}  // namespace kerngen

#endif
