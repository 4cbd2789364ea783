// Wire types of the agenda service API. The UI never derives model state
// client-side; everything rendered comes from these payloads.

export interface Contact {
  id: string;
  name: string;
  has_relationship: boolean;
}

export interface Relationship {
  role: string;
  hierarchy_level: string;
  contact_frequency: number;
  geographical_distance: number;
  years_known: number;
  relationship_quality: number;
  depth_of_acquaintance: number;
  formality_level: number;
  shared_interests: number;
  age_difference?: number | null;
}

export interface Meeting {
  id: string;
  title: string;
  start: string;
  end: string;
  contact_id: string;
  setting: string;
  event_frequency: string;
  initiator: string;
  help_dynamic: string;
  created_at: string;
}

export interface Conflict {
  id: string;
  meeting_ids: [string, string];
  overlap_start: string;
  overlap_end: string;
}

export interface ExplanationPayload {
  text: string;
  cited_feature: string;
  template_id: string;
}

export interface AttributionSummary {
  base_value: number;
  prediction_raw: number;
  grouped_phi: Record<string, number>;
}

export interface SuggestionPayload {
  schema_version: string;
  conflict: Conflict;
  suggestion: {
    meeting_id: string;
    other_meeting_id: string;
    label: string;
    tie_breaker: string;
  };
  priorities: Record<string, number>;
  profiles: Record<string, Record<string, number>>;
  salient_feature: string;
  explanations: {
    level1: ExplanationPayload;
    level2: ExplanationPayload;
  };
  attributions: Record<string, AttributionSummary>;
}

export interface FeedbackEvent {
  conflict_id: string;
  suggested_meeting_id: string;
  decision: "accepted" | "overrode";
  shown_styles: string[];
  timestamp: string;
}

export interface StructuredError {
  schema_version: string;
  code: string;
  field: string | null;
  message: string;
}

export type ExplanationStyle = "level1" | "level2";
