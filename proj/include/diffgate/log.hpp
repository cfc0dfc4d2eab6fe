#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace diffgate::log {

enum class Level { error = 0, info = 1, debug = 2 };

inline Level threshold() {
    static const Level lvl = [] {
        const char* env = std::getenv("DIFFGATE_LOG");
        if (!env) return Level::error;
        if (std::strcmp(env, "debug") == 0) return Level::debug;
        if (std::strcmp(env, "info") == 0) return Level::info;
        return Level::error;
    }();
    return lvl;
}

inline void emit(Level lvl, const std::string& msg) {
    if (lvl <= threshold()) {
        const char* tag = lvl == Level::error ? "error" : lvl == Level::info ? "info" : "debug";
        std::fprintf(stderr, "[diffgate:%s] %s\n", tag, msg.c_str());
    }
}

inline void error(const std::string& msg) { emit(Level::error, msg); }
inline void info(const std::string& msg) { emit(Level::info, msg); }
inline void debug(const std::string& msg) { emit(Level::debug, msg); }

}  // namespace diffgate::log
