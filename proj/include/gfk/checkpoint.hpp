#pragma once

#include <string>
#include <vector>

#include "gfk/tensor.hpp"

namespace gfk {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

// Binary checkpoint: magic "GFK1", version u32, then one record per
// parameter: name length u32, name bytes, rank u32, extents u64 each,
// values f64 each. All fields little-endian.
void save_checkpoint(const std::string& path, const std::vector<NamedParam>& params);

// Loads values into existing parameters; every name must be present in the
// file with a matching shape.
void load_checkpoint(const std::string& path, std::vector<NamedParam>& params);

// Raw read, used by tooling and tests.
std::vector<NamedParam> read_checkpoint(const std::string& path);

}  // namespace gfk
