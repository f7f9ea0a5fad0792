#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "pitlab/descriptor.hpp"

namespace testutil {

inline std::string fixture_dir() { return PITLAB_FIXTURE_DIR; }

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open fixture: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline pitlab::ServerDescriptor load_descriptor(const std::string& name) {
    return pitlab::parse_descriptor(read_file(fixture_dir() + "/descriptors/" + name + ".json"));
}

}  // namespace testutil
