// Client-side mirror of the data dictionary: same tokens, same ranges.
// The server re-validates everything; this layer exists so the form can
// block bad submissions and label the offending field immediately.

export const SETTINGS = ["work", "casual", "family", "other"] as const;
export const EVENT_FREQUENCIES = ["first_time", "rarely", "monthly", "weekly", "daily"] as const;
export const INITIATORS = ["user", "other_person", "external"] as const;
export const HELP_DYNAMICS = ["giving_help", "receiving_help", "neither"] as const;
export const ROLES = [
  "supervisor", "colleague", "friend", "family_member", "partner", "acquaintance", "other",
] as const;
export const HIERARCHY_LEVELS = ["lower", "equal", "higher"] as const;

export const ORDINAL_RANGES: Record<string, [number, number]> = {
  contact_frequency: [1, 7],
  geographical_distance: [1, 5],
  relationship_quality: [1, 7],
  depth_of_acquaintance: [1, 7],
  formality_level: [1, 7],
  shared_interests: [1, 7],
};

export const RELATIONSHIP_ENUMS: Record<string, readonly string[]> = {
  role: ROLES,
  hierarchy_level: HIERARCHY_LEVELS,
};

export const CUE_ENUMS: Record<string, readonly string[]> = {
  setting: SETTINGS,
  event_frequency: EVENT_FREQUENCIES,
  initiator: INITIATORS,
  help_dynamic: HELP_DYNAMICS,
};

export interface FieldErrors {
  [field: string]: string;
}

/** Validate the relationship form; age_difference may be blank (absent). */
export function validateRelationship(raw: Record<string, string>): {
  errors: FieldErrors;
  value?: Record<string, unknown>;
} {
  const errors: FieldErrors = {};
  const value: Record<string, unknown> = {};

  for (const [field, tokens] of Object.entries(RELATIONSHIP_ENUMS)) {
    const v = raw[field] ?? "";
    if (!tokens.includes(v)) {
      errors[field] = `choose one of: ${tokens.join(", ")}`;
    } else {
      value[field] = v;
    }
  }
  for (const [field, [lo, hi]] of Object.entries(ORDINAL_RANGES)) {
    const v = Number(raw[field]);
    if (!Number.isInteger(v) || v < lo || v > hi) {
      errors[field] = `integer between ${lo} and ${hi}`;
    } else {
      value[field] = v;
    }
  }
  const years = Number(raw["years_known"]);
  if (raw["years_known"] === "" || Number.isNaN(years) || years < 0) {
    errors["years_known"] = "non-negative number of years";
  } else {
    value["years_known"] = years;
  }
  const age = raw["age_difference"] ?? "";
  if (age.trim() === "") {
    // absent is fine; submit without the field
  } else if (Number.isNaN(Number(age))) {
    errors["age_difference"] = "number of years, or leave blank";
  } else {
    value["age_difference"] = Number(age);
  }
  return Object.keys(errors).length ? { errors } : { errors, value };
}

export function validateMeeting(raw: Record<string, string>): {
  errors: FieldErrors;
  value?: Record<string, unknown>;
} {
  const errors: FieldErrors = {};
  const value: Record<string, unknown> = {};
  if (!raw["title"]?.trim()) errors["title"] = "title is required";
  else value["title"] = raw["title"].trim();
  if (!raw["contact_id"]) errors["contact_id"] = "pick a contact";
  else value["contact_id"] = raw["contact_id"];
  for (const [field, tokens] of Object.entries(CUE_ENUMS)) {
    const v = raw[field] ?? "";
    if (!tokens.includes(v)) errors[field] = `choose one of: ${tokens.join(", ")}`;
    else value[field] = v;
  }
  const start = Date.parse(raw["start"] ?? "");
  const end = Date.parse(raw["end"] ?? "");
  if (Number.isNaN(start)) errors["start"] = "valid start time required";
  if (Number.isNaN(end)) errors["end"] = "valid end time required";
  if (!Number.isNaN(start) && !Number.isNaN(end) && start >= end) {
    errors["end"] = "end must be after start";
  }
  if (!errors["start"]) value["start"] = new Date(start).toISOString();
  if (!errors["end"] && !Number.isNaN(end)) value["end"] = new Date(end).toISOString();
  return Object.keys(errors).length ? { errors } : { errors, value };
}
