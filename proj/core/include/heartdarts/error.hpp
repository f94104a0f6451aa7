// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace heartdarts {

/// Base class for every error raised by the library. `category()` is the
/// short tag the CLI prints in front of the message.
class Error : public std::runtime_error {
public:
    Error(std::string_view category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    std::string_view category() const noexcept { return category_; }

private:
    std::string_view category_;
};

#define HEARTDARTS_DEFINE_ERROR(Name, tag)                                   \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& message) : Error(tag, message) {}   \
    }

HEARTDARTS_DEFINE_ERROR(ShapeError, "shape");
HEARTDARTS_DEFINE_ERROR(StateError, "state");
HEARTDARTS_DEFINE_ERROR(InputError, "input");
HEARTDARTS_DEFINE_ERROR(StatisticsError, "statistics");
HEARTDARTS_DEFINE_ERROR(ParseError, "parse");
HEARTDARTS_DEFINE_ERROR(ValidationError, "validation");
HEARTDARTS_DEFINE_ERROR(CheckpointError, "checkpoint");
HEARTDARTS_DEFINE_ERROR(IngestionError, "ingestion");
HEARTDARTS_DEFINE_ERROR(ConfigError, "config");
HEARTDARTS_DEFINE_ERROR(FormatError, "format");

#undef HEARTDARTS_DEFINE_ERROR

}  // namespace heartdarts
