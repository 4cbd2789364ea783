import { ApiClient, ApiError, NetworkError } from "./api.js";
import { defaultExplanationStyle } from "./defaultStyle.js";
import { clear, el, fmtTime } from "./dom.js";
import type {
  Conflict,
  Contact,
  ExplanationStyle,
  FeedbackEvent,
  Meeting,
  SuggestionPayload,
} from "./types.js";
import {
  CUE_ENUMS,
  ORDINAL_RANGES,
  RELATIONSHIP_ENUMS,
  validateMeeting,
  validateRelationship,
} from "./validation.js";

/**
 * The single-page client. All state shown anywhere is reconstructible from
 * API responses; the client never computes predictions or explanations
 * itself. Mutations go through the documented endpoints only.
 */
export class App {
  private contacts: Contact[] = [];
  private meetings: Meeting[] = [];
  private conflicts: Conflict[] = [];
  private feedback: FeedbackEvent[] = [];
  private suggestion: SuggestionPayload | null = null;
  private activeStyle: ExplanationStyle = "level1";
  private stylePreference: ExplanationStyle | null = null; // user override beats the default
  private selectedContact: string | null = null;
  private postingConflicts = new Set<string>(); // serialize feedback per conflict

  private readonly sections: Record<string, HTMLElement> = {};

  constructor(
    private readonly root: HTMLElement,
    private readonly client: ApiClient,
  ) {
    for (const name of ["error", "contacts", "relationship", "meetings", "conflicts", "suggestion", "feedback"]) {
      const section = el("section", { id: `section-${name}`, "data-testid": `section-${name}` });
      this.sections[name] = section;
      this.root.append(section);
    }
  }

  async refresh(): Promise<void> {
    await this.guard(() => this.loadAll(), () => this.refresh());
  }

  /** Fetch and render everything; throws on failure, touches no banner. */
  private async loadAll(): Promise<void> {
    const [contacts, meetings, conflicts, feedback] = await Promise.all([
      this.client.listContacts(),
      this.client.listMeetings(),
      this.client.listConflicts(),
      this.client.listFeedback(),
    ]);
    this.contacts = contacts.contacts;
    this.meetings = meetings.meetings;
    this.conflicts = conflicts.conflicts;
    this.feedback = feedback.feedback;
    if (this.suggestion && !this.conflicts.some((c) => c.id === this.suggestion!.conflict.id)) {
      this.suggestion = null; // stale panel for a conflict that no longer exists
    }
    this.renderAll();
  }

  /** Reload lists while keeping any error banner on screen. */
  private async refreshKeepingError(): Promise<void> {
    try {
      await this.loadAll();
    } catch {
      // the banner already reports the original failure
    }
  }

  // -- error surface -------------------------------------------------------

  private showError(message: string, retry?: () => void): void {
    const box = this.sections["error"];
    clear(box);
    const banner = el("div", { class: "error-banner", "data-testid": "error-banner", role: "alert" }, message);
    if (retry) {
      const button = el("button", { "data-testid": "error-retry" }, "Retry");
      button.addEventListener("click", () => {
        clear(box);
        retry();
      });
      banner.append(" ", button);
    }
    box.append(banner);
  }

  private clearError(): void {
    clear(this.sections["error"]);
  }

  private async guard<T>(action: () => Promise<T>, retry?: () => void): Promise<T | undefined> {
    try {
      const result = await action();
      this.clearError();
      return result;
    } catch (err) {
      if (err instanceof NetworkError) {
        this.showError(`network failure: ${err.message}`, retry);
      } else if (err instanceof ApiError) {
        this.showError(err.field ? `${err.field}: ${err.message}` : err.message);
      } else {
        throw err;
      }
      return undefined;
    }
  }

  // -- rendering -----------------------------------------------------------

  private renderAll(): void {
    this.renderContacts();
    this.renderRelationshipForm();
    this.renderMeetings();
    this.renderConflicts();
    this.renderSuggestion();
    this.renderFeedback();
  }

  private renderContacts(): void {
    const box = this.sections["contacts"];
    clear(box);
    box.append(el("h2", {}, "Contacts"));
    const list = el("ul", { "data-testid": "contact-list" });
    for (const contact of this.contacts) {
      const item = el(
        "li",
        { "data-testid": `contact-${contact.id}` },
        `${contact.name || contact.id} ${contact.has_relationship ? "" : "(no relationship yet)"}`,
      );
      const edit = el("button", { "data-testid": `edit-relationship-${contact.id}` }, "Edit relationship");
      edit.addEventListener("click", () => {
        this.selectedContact = contact.id;
        this.renderRelationshipForm();
      });
      item.append(" ", edit);
      list.append(item);
    }
    box.append(list);

    const form = el("form", { "data-testid": "new-contact-form" });
    const id = el("input", { name: "id", placeholder: "contact id" });
    const name = el("input", { name: "name", placeholder: "name" });
    const submit = el("button", { type: "submit" }, "Add contact");
    form.append(id, name, submit);
    form.addEventListener("submit", async (event) => {
      event.preventDefault();
      if (!id.value.trim()) return;
      await this.guard(() => this.client.putContact(id.value.trim(), name.value.trim()));
      await this.refresh();
    });
    box.append(form);
  }

  private renderRelationshipForm(): void {
    const box = this.sections["relationship"];
    clear(box);
    if (!this.selectedContact) return;
    const contact = this.selectedContact;
    box.append(el("h2", {}, `Relationship with ${contact}`));
    const form = el("form", { "data-testid": "relationship-form", novalidate: "" });

    const fieldBoxes: Record<string, HTMLElement> = {};
    const addField = (name: string, input: HTMLElement) => {
      const error = el("span", { class: "field-error", "data-testid": `error-${name}` });
      const label = el("label", {}, `${name.replaceAll("_", " ")}: `, input, " ", error);
      fieldBoxes[name] = error;
      form.append(el("div", { class: "field" }, label));
    };

    for (const [name, tokens] of Object.entries(RELATIONSHIP_ENUMS)) {
      const select = el("select", { name, "data-testid": `input-${name}` });
      for (const token of tokens) select.append(el("option", { value: token }, token));
      addField(name, select);
    }
    for (const [name, [lo, hi]] of Object.entries(ORDINAL_RANGES)) {
      // scale widget: a bounded slider-style numeric input
      addField(name, el("input", {
        name, type: "number", min: String(lo), max: String(hi), step: "1",
        value: String(lo), "data-testid": `input-${name}`,
      }));
    }
    addField("years_known", el("input", {
      name: "years_known", type: "number", min: "0", step: "0.1", value: "0",
      "data-testid": "input-years_known",
    }));
    addField("age_difference", el("input", {
      name: "age_difference", type: "number", step: "0.1", placeholder: "blank = unknown",
      "data-testid": "input-age_difference",
    }));

    const submit = el("button", { type: "submit", "data-testid": "relationship-submit" }, "Save");
    form.append(submit);
    form.addEventListener("submit", async (event) => {
      event.preventDefault();
      const raw: Record<string, string> = {};
      for (const input of form.querySelectorAll<HTMLInputElement | HTMLSelectElement>("input,select")) {
        raw[input.name] = input.value;
      }
      for (const errorBox of Object.values(fieldBoxes)) clear(errorBox);
      const { errors, value } = validateRelationship(raw);
      for (const [field, message] of Object.entries(errors)) {
        fieldBoxes[field]?.append(message);
      }
      if (!value) return;
      try {
        await this.client.putRelationship(contact, value as never);
        this.clearError();
        await this.refresh();
      } catch (err) {
        if (err instanceof ApiError && err.field && fieldBoxes[err.field]) {
          clear(fieldBoxes[err.field]);
          fieldBoxes[err.field].append(err.message);
        } else if (err instanceof ApiError) {
          this.showError(err.message);
        } else if (err instanceof NetworkError) {
          this.showError(`network failure: ${err.message}`);
        } else {
          throw err;
        }
      }
    });
    box.append(form);
  }

  private renderMeetings(): void {
    const box = this.sections["meetings"];
    clear(box);
    box.append(el("h2", {}, "Agenda"));
    const timeline = el("ol", { class: "timeline", "data-testid": "timeline" });
    const sorted = [...this.meetings].sort((a, b) => a.start.localeCompare(b.start));
    for (const meeting of sorted) {
      timeline.append(
        el(
          "li",
          { "data-testid": `meeting-${meeting.id}` },
          `${fmtTime(meeting.start)} – ${fmtTime(meeting.end)}  ${meeting.title} ` +
            `(with ${meeting.contact_id}, ${meeting.setting})`,
        ),
      );
    }
    box.append(timeline);
    box.append(this.meetingForm());
  }

  private meetingForm(): HTMLElement {
    const form = el("form", { "data-testid": "new-meeting-form", novalidate: "" });
    const inputs: Record<string, HTMLInputElement | HTMLSelectElement> = {};
    const add = (name: string, input: HTMLInputElement | HTMLSelectElement) => {
      inputs[name] = input;
      form.append(el("label", {}, `${name.replaceAll("_", " ")}: `, input), " ");
    };
    add("title", el("input", { name: "title", "data-testid": "meeting-title" }));
    const contact = el("select", { name: "contact_id", "data-testid": "meeting-contact" });
    for (const c of this.contacts) contact.append(el("option", { value: c.id }, c.id));
    add("contact_id", contact);
    add("start", el("input", { name: "start", type: "datetime-local", "data-testid": "meeting-start" }));
    add("end", el("input", { name: "end", type: "datetime-local", "data-testid": "meeting-end" }));
    for (const [name, tokens] of Object.entries(CUE_ENUMS)) {
      const select = el("select", { name, "data-testid": `meeting-${name}` });
      for (const token of tokens) select.append(el("option", { value: token }, token));
      add(name, select);
    }
    const errorBox = el("span", { class: "field-error", "data-testid": "meeting-error" });
    const submit = el("button", { type: "submit", "data-testid": "meeting-submit" }, "Add meeting");
    form.append(errorBox, submit);
    form.addEventListener("submit", async (event) => {
      event.preventDefault();
      clear(errorBox);
      const raw: Record<string, string> = {};
      for (const [name, input] of Object.entries(inputs)) raw[name] = input.value;
      const { errors, value } = validateMeeting(raw);
      if (!value) {
        errorBox.append(Object.entries(errors).map(([f, m]) => `${f}: ${m}`).join("; "));
        return;
      }
      await this.guard(() => this.client.createMeeting(value as never));
      await this.refresh();
    });
    return form;
  }

  private renderConflicts(): void {
    const box = this.sections["conflicts"];
    clear(box);
    box.append(el("h2", {}, "Conflicts"));
    if (!this.conflicts.length) {
      box.append(el("p", { "data-testid": "no-conflicts" }, "No scheduling conflicts."));
      return;
    }
    const list = el("div", { "data-testid": "conflict-cards" });
    for (const conflict of this.conflicts) {
      const card = el(
        "div",
        { class: "conflict-card", "data-testid": `conflict-${conflict.id}` },
        `${conflict.meeting_ids[0]} overlaps ${conflict.meeting_ids[1]} ` +
          `(${fmtTime(conflict.overlap_start)} – ${fmtTime(conflict.overlap_end)}) `,
      );
      const review = el("button", { "data-testid": `review-${conflict.id}` }, "Review");
      review.addEventListener("click", () => void this.openConflict(conflict.id));
      card.append(review);
      list.append(card);
    }
    box.append(list);
  }

  async openConflict(conflictId: string): Promise<void> {
    const payload = await this.guard(
      () => this.client.getSuggestion(conflictId),
      () => this.openConflict(conflictId),
    );
    if (!payload) {
      // a stale card may 404; drop it and refresh the list, keeping the
      // inline error visible
      await this.refreshKeepingError();
      return;
    }
    this.suggestion = payload;
    this.activeStyle = this.stylePreference ?? defaultExplanationStyle(payload.salient_feature);
    this.renderSuggestion();
  }

  private renderSuggestion(): void {
    const box = this.sections["suggestion"];
    clear(box);
    const payload = this.suggestion;
    if (!payload) return;
    box.append(el("h2", {}, "Suggestion"));

    const byId = new Map(this.meetings.map((m) => [m.id, m]));
    const sideBySide = el("div", { class: "meetings-side-by-side", "data-testid": "side-by-side" });
    for (const mid of payload.conflict.meeting_ids) {
      const meeting = byId.get(mid);
      const isSuggested = mid === payload.suggestion.meeting_id;
      const panel = el(
        "div",
        { class: `meeting-panel${isSuggested ? " suggested" : ""}`, "data-testid": `panel-${mid}` },
        el("h3", {}, meeting ? meeting.title : mid),
        el("p", {}, meeting ? `${fmtTime(meeting.start)} – ${fmtTime(meeting.end)}` : ""),
        el("p", {}, `predicted priority: ${payload.priorities[mid].toFixed(2)}`),
      );
      if (isSuggested) {
        panel.prepend(el("span", { class: "badge", "data-testid": "suggested-badge" }, "suggested"));
      }
      sideBySide.append(panel);
    }
    box.append(sideBySide);

    // explanation style toggle: both styles always offered
    const toggle = el("div", { class: "style-toggle", "data-testid": "style-toggle" });
    for (const style of ["level1", "level2"] as const) {
      const label = style === "level1" ? "Situation features" : "Characteristics";
      const button = el(
        "button",
        {
          "data-testid": `style-${style}`,
          "aria-pressed": String(this.activeStyle === style),
          class: this.activeStyle === style ? "active" : "",
        },
        label,
      );
      button.addEventListener("click", () => {
        this.activeStyle = style;
        this.stylePreference = style;
        this.renderSuggestion();
      });
      toggle.append(button);
    }
    box.append(toggle);
    box.append(
      el(
        "p",
        { class: "explanation-text", "data-testid": "explanation-text" },
        payload.explanations[this.activeStyle].text,
      ),
    );

    box.append(this.attributionBars(payload));

    const accept = el("button", { "data-testid": "accept-button" }, "Accept suggestion");
    const override = el("button", { "data-testid": "override-button" }, "Attend the other one");
    accept.addEventListener("click", () => void this.submitFeedback("accepted"));
    override.addEventListener("click", () => void this.submitFeedback("overrode"));
    box.append(el("div", { class: "decision" }, accept, " ", override));
  }

  private attributionBars(payload: SuggestionPayload): HTMLElement {
    const container = el("div", { class: "attribution", "data-testid": "attribution-bars" });
    container.append(el("h3", {}, "Why: feature weights for the suggested meeting"));
    const att = payload.attributions[payload.suggestion.meeting_id];
    if (!att) return container;
    const entries = Object.entries(att.grouped_phi)
      .sort((a, b) => Math.abs(b[1]) - Math.abs(a[1]))
      .slice(0, 6);
    const maxAbs = Math.max(...entries.map(([, v]) => Math.abs(v)), 1e-9);
    for (const [feature, value] of entries) {
      const width = Math.round((Math.abs(value) / maxAbs) * 100);
      container.append(
        el(
          "div",
          { class: "bar-row", "data-testid": `bar-${feature}` },
          el("span", { class: "bar-label" }, feature),
          el("span", {
            class: `bar ${value >= 0 ? "positive" : "negative"}`,
            style: `width:${width}%`,
            "data-phi": value.toFixed(4),
          }),
          el("span", { class: "bar-value" }, value.toFixed(2)),
        ),
      );
    }
    return container;
  }

  private async submitFeedback(decision: "accepted" | "overrode"): Promise<void> {
    const payload = this.suggestion;
    if (!payload) return;
    const conflictId = payload.conflict.id;
    if (this.postingConflicts.has(conflictId)) return; // one post per conflict at a time
    this.postingConflicts.add(conflictId);

    // optimistic: show the event immediately, roll back if the post fails
    const optimistic: FeedbackEvent = {
      conflict_id: conflictId,
      suggested_meeting_id: payload.suggestion.meeting_id,
      decision,
      shown_styles: ["level1", "level2"],
      timestamp: new Date().toISOString(),
    };
    this.feedback = [...this.feedback, optimistic];
    this.renderFeedback();
    try {
      await this.client.postFeedback(conflictId, {
        suggested_meeting_id: payload.suggestion.meeting_id,
        decision,
        shown_styles: ["level1", "level2"],
      });
      this.clearError();
      await this.refresh();
    } catch (err) {
      this.feedback = this.feedback.filter((e) => e !== optimistic);
      this.renderFeedback();
      if (err instanceof ApiError) {
        this.showError(err.message);
        if (err.status === 404) await this.refreshKeepingError(); // stale conflict
      } else if (err instanceof NetworkError) {
        this.showError(`network failure: ${err.message}`, () => this.submitFeedback(decision));
      } else {
        throw err;
      }
    } finally {
      this.postingConflicts.delete(conflictId);
    }
  }

  private renderFeedback(): void {
    const box = this.sections["feedback"];
    clear(box);
    box.append(el("h2", {}, "Feedback history"));
    const list = el("ul", { "data-testid": "feedback-list" });
    for (const event of this.feedback) {
      list.append(
        el(
          "li",
          { "data-testid": "feedback-item" },
          `${event.timestamp}: ${event.decision} suggestion ${event.suggested_meeting_id} ` +
            `for ${event.conflict_id}`,
        ),
      );
    }
    box.append(list);
  }
}
