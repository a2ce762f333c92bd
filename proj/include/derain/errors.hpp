#pragma once

#include <stdexcept>
#include <string>

namespace derain {

// Shapes, layouts, file formats or dataset structure do not line up.
class StructuralError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A loss, score or parameter went non-finite.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid or unknown configuration values.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Reading or writing a file failed.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace derain
