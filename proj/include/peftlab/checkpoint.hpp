// peftlab/checkpoint.hpp

// Copyright 2026  The peftlab Authors

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

#ifndef PEFTLAB_CHECKPOINT_HPP_
#define PEFTLAB_CHECKPOINT_HPP_

#include <string>
#include <vector>

#include "peftlab/tensor.hpp"

namespace peftlab {

// Flat binary of raw doubles plus a plain-text manifest. Manifest line:
//   <name> <rank> <extent...> <offset-in-doubles>
// Round trips are bit-exact.
void save_checkpoint(const std::string &binary_path,
                     const std::string &manifest_path,
                     const std::vector<Parameter *> &params);

// Loads values into matching parameters by name; shapes must agree. Names in
// the checkpoint that are absent from `params` raise unless `allow_extra`.
void load_checkpoint(const std::string &binary_path,
                     const std::string &manifest_path,
                     const std::vector<Parameter *> &params,
                     bool allow_extra = false);

}  // namespace peftlab

#endif  // PEFTLAB_CHECKPOINT_HPP_
