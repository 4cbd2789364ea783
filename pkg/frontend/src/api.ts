import type {
  Conflict,
  Contact,
  FeedbackEvent,
  Meeting,
  Relationship,
  StructuredError,
  SuggestionPayload,
} from "./types.js";

/** Error carrying the service's structured {code, field, message} body. */
export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly field: string | null;

  constructor(status: number, body: StructuredError) {
    super(body.message || `request failed with status ${status}`);
    this.status = status;
    this.code = body.code ?? "unknown";
    this.field = body.field ?? null;
  }
}

/** Network-level failure (no structured body); the UI offers a retry. */
export class NetworkError extends Error {}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
    private readonly token?: string,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new NetworkError(err instanceof Error ? err.message : String(err));
    }
    if (!response.ok) {
      let parsed: StructuredError;
      try {
        parsed = (await response.json()) as StructuredError;
      } catch {
        parsed = {
          schema_version: "1",
          code: `http_${response.status}`,
          field: null,
          message: response.statusText,
        };
      }
      throw new ApiError(response.status, parsed);
    }
    return (await response.json()) as T;
  }

  listContacts(): Promise<{ contacts: Contact[] }> {
    return this.request("GET", "/contacts");
  }

  putContact(id: string, name: string): Promise<{ contact: Contact }> {
    return this.request("PUT", `/contacts/${encodeURIComponent(id)}`, { name });
  }

  putRelationship(id: string, rel: Relationship): Promise<{ relationship: Relationship }> {
    return this.request("PUT", `/contacts/${encodeURIComponent(id)}/relationship`, rel);
  }

  listMeetings(): Promise<{ meetings: Meeting[] }> {
    return this.request("GET", "/meetings");
  }

  createMeeting(meeting: Partial<Meeting>): Promise<{ meeting: Meeting }> {
    return this.request("POST", "/meetings", meeting);
  }

  listConflicts(): Promise<{ conflicts: Conflict[] }> {
    return this.request("GET", "/conflicts");
  }

  getSuggestion(conflictId: string): Promise<SuggestionPayload> {
    return this.request("GET", `/conflicts/${encodeURIComponent(conflictId)}/suggestion`);
  }

  postFeedback(
    conflictId: string,
    feedback: { suggested_meeting_id: string; decision: "accepted" | "overrode"; shown_styles: string[] },
  ): Promise<{ recorded: FeedbackEvent; feedback_count: number }> {
    return this.request("POST", `/conflicts/${encodeURIComponent(conflictId)}/feedback`, feedback);
  }

  listFeedback(): Promise<{ feedback: FeedbackEvent[] }> {
    return this.request("GET", "/feedback");
  }
}
