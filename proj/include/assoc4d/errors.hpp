#pragma once

#include <stdexcept>
#include <string>

namespace assoc4d {

// Error categories map to distinct CLI exit codes.
struct ConfigError : std::runtime_error {
	explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : std::runtime_error {
	explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct GeometryError : std::runtime_error {
	explicit GeometryError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace assoc4d
