#pragma once

#include <iosfwd>

#include "nercp/crf.hpp"

namespace nercp {

// JSON checkpoint:
//   {"format": "nercp-crf", "version": 1, "classes": [...], "dim": d,
//    "emission": [|L|*d numbers, row-major],
//    "transition": [|L|*|L| entries, row-major, null where masked],
//    "mask": [|L|*|L| of 0/1]}
void write_checkpoint(const CrfParams& params, std::ostream& out);
CrfParams read_checkpoint(std::istream& in);

}  // namespace nercp
