#ifndef TSAGRID_VERSION_HPP
#define TSAGRID_VERSION_HPP

#define TSAGRID_VERSION "0.1.0"

#endif
