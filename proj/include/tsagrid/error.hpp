#ifndef TSAGRID_ERROR_HPP
#define TSAGRID_ERROR_HPP

#include <stdexcept>
#include <string>

namespace tsagrid {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A linear system could not be solved (singular network, rank-deficient window, ...).
class SingularSystem : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message)
{
    if (!condition) {
        throw InvalidArgument(message);
    }
}

} // namespace detail
} // namespace tsagrid

#endif // TSAGRID_ERROR_HPP
