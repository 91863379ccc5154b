// peftlab/checkpoint.cpp

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

#include "peftlab/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace peftlab {

void save_checkpoint(const std::string &binary_path,
                     const std::string &manifest_path,
                     const std::vector<Parameter *> &params) {
  std::ofstream bin(binary_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + binary_path + " for writing");
  std::ofstream man(manifest_path);
  if (!man) throw std::runtime_error("cannot open " + manifest_path + " for writing");

  std::size_t offset = 0;
  for (const Parameter *p : params) {
    const auto &v = p->tensor().values();
    bin.write(reinterpret_cast<const char *>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
    man << p->name() << " " << p->tensor().rank();
    for (std::size_t ext : p->tensor().shape()) man << " " << ext;
    man << " " << offset << "\n";
    offset += v.size();
  }
  if (!bin || !man) {
    throw std::runtime_error("checkpoint write failed for " + binary_path);
  }
}

void load_checkpoint(const std::string &binary_path,
                     const std::string &manifest_path,
                     const std::vector<Parameter *> &params,
                     bool allow_extra) {
  std::ifstream man(manifest_path);
  if (!man) throw std::runtime_error("cannot open " + manifest_path);
  std::ifstream bin(binary_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + binary_path);

  std::map<std::string, Parameter *> by_name;
  for (Parameter *p : params) by_name[p->name()] = p;

  std::string line;
  while (std::getline(man, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name;
    std::size_t rank = 0;
    if (!(ls >> name >> rank) || rank == 0 || rank > 3) {
      throw std::runtime_error("malformed manifest line: " + line);
    }
    Shape shape(rank);
    for (std::size_t i = 0; i < rank; ++i) {
      if (!(ls >> shape[i])) {
        throw std::runtime_error("malformed manifest line: " + line);
      }
    }
    std::size_t offset = 0;
    if (!(ls >> offset)) throw std::runtime_error("malformed manifest line: " + line);

    auto it = by_name.find(name);
    if (it == by_name.end()) {
      if (allow_extra) continue;
      throw std::runtime_error("checkpoint entry '" + name +
                               "' has no matching parameter");
    }
    Parameter *p = it->second;
    if (p->tensor().shape() != shape) {
      throw std::runtime_error("checkpoint entry '" + name + "' has shape " +
                               shape_to_string(shape) + " but parameter is " +
                               shape_to_string(p->tensor().shape()));
    }
    auto &v = p->tensor().raw_values();
    bin.seekg(static_cast<std::streamoff>(offset * sizeof(double)));
    bin.read(reinterpret_cast<char *>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!bin) {
      throw std::runtime_error("checkpoint binary too short for '" + name + "'");
    }
  }
}

}  // namespace peftlab
