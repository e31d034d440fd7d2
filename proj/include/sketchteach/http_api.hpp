#pragma once

#include "sketchteach/session.hpp"

// Clients that post JSON without a content type get form encoding; allow sketch-sized bodies.
#ifndef CPPHTTPLIB_FORM_URL_ENCODED_PAYLOAD_MAX_LENGTH
#define CPPHTTPLIB_FORM_URL_ENCODED_PAYLOAD_MAX_LENGTH (64 * 1024 * 1024)
#endif
#include <httplib.h>

namespace sketchteach {

/// Mounts the session API on `server`. Handlers answer with JSON bodies;
/// errors carry {"error": message, "details": {...}}.
void register_routes(httplib::Server& server, SessionStore& store);

/// Parses "x,y,z" into a point; throws std::invalid_argument otherwise.
Vec3 parse_point(const std::string& text);

}  // namespace sketchteach
