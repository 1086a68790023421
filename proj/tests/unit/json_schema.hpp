// json_schema.hpp
//
// Just enough JSON Schema for the shipped schemas: type, enum, required,
// properties, additionalProperties (bool), items, minItems, maxItems,
// minimum, maximum, anyOf. Returns the list of violations, empty when valid.

#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace agm::test
{

inline bool schema_type_matches(const nlohmann::json& v, const std::string& t)
{
    if (t == "null")
        return v.is_null();
    if (t == "boolean")
        return v.is_boolean();
    if (t == "integer")
        return v.is_number_integer();
    if (t == "number")
        return v.is_number();
    if (t == "string")
        return v.is_string();
    if (t == "array")
        return v.is_array();
    if (t == "object")
        return v.is_object();
    return false;
}

inline void schema_check(const nlohmann::json& v, const nlohmann::json& s, const std::string& at,
                         std::vector<std::string>& errors)
{
    if (s.contains("anyOf"))
    {
        bool any = false;
        for (const auto& alt : s["anyOf"])
        {
            std::vector<std::string> e;
            schema_check(v, alt, at, e);
            any = any || e.empty();
        }
        if (!any)
            errors.push_back(at + ": matches no alternative");
        return;
    }
    if (s.contains("type"))
    {
        bool ok = false;
        if (s["type"].is_array())
            for (const auto& t : s["type"])
                ok = ok || schema_type_matches(v, t.get<std::string>());
        else
            ok = schema_type_matches(v, s["type"].get<std::string>());
        if (!ok)
        {
            errors.push_back(at + ": wrong type " + std::string(v.type_name()));
            return;
        }
    }
    if (s.contains("enum"))
    {
        bool found = false;
        for (const auto& e : s["enum"])
            found = found || e == v;
        if (!found)
            errors.push_back(at + ": " + v.dump() + " not in enum");
    }
    if (v.is_number())
    {
        if (s.contains("minimum") && v.get<double>() < s["minimum"].get<double>())
            errors.push_back(at + ": below minimum");
        if (s.contains("maximum") && v.get<double>() > s["maximum"].get<double>())
            errors.push_back(at + ": above maximum");
    }
    if (v.is_array())
    {
        if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
            errors.push_back(at + ": too few items");
        if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>())
            errors.push_back(at + ": too many items");
        if (s.contains("items"))
            for (std::size_t i = 0; i < v.size(); ++i)
                schema_check(v[i], s["items"], at + "[" + std::to_string(i) + "]", errors);
    }
    if (v.is_object())
    {
        if (s.contains("required"))
            for (const auto& k : s["required"])
                if (!v.contains(k.get<std::string>()))
                    errors.push_back(at + ": missing " + k.get<std::string>());
        const auto props = s.value("properties", nlohmann::json::object());
        for (const auto& [k, child] : v.items())
        {
            if (props.contains(k))
                schema_check(child, props[k], at + "." + k, errors);
            else if (s.contains("additionalProperties") && s["additionalProperties"] == false)
                errors.push_back(at + ": unexpected key " + k);
        }
    }
}

inline std::vector<std::string> schema_errors(const nlohmann::json& value, const nlohmann::json& schema)
{
    std::vector<std::string> errors;
    schema_check(value, schema, "$", errors);
    return errors;
}

}  // namespace agm::test
