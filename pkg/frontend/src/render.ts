/** HTML builders. Pure string functions over server payloads.
 *
 * Everything rendered comes from the payload argument alone: in holistic
 * mode the server serves the transcript only up to the current mention's
 * utterance, and these functions cannot add more than they were given.
 * Ranked tiles are styled down but stay clickable buttons; selecting a
 * ranked image is legal and the server records it.
 */

import type {
  ActiveStimulus,
  CandidateTile,
  HolisticStimulus,
  IndependentStimulus,
  MentionRef,
  UtteranceLine,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function attr(text: string): string {
  return escapeHtml(text);
}

/** One transcript line; the target line gets its mention span marked. */
export function renderUtterance(
  utterance: UtteranceLine,
  mention: MentionRef | null,
): string {
  const speaker = escapeHtml(utterance.speaker);
  let body: string;
  if (mention !== null && utterance.index === mention.utterance_index) {
    const [start, end] = mention.span;
    body =
      escapeHtml(utterance.text.slice(0, start)) +
      `<mark class="mention">${escapeHtml(utterance.text.slice(start, end))}</mark>` +
      escapeHtml(utterance.text.slice(end));
  } else {
    body = escapeHtml(utterance.text);
  }
  return (
    `<div class="utterance speaker-${attr(utterance.speaker)}">` +
    `<span class="speaker">${speaker}</span>` +
    `<span class="text">${body}</span></div>`
  );
}

export function renderTranscript(stimulus: HolisticStimulus): string {
  const lines = stimulus.utterances
    .map((u) => renderUtterance(u, stimulus.mention))
    .join("");
  return `<div class="transcript">${lines}</div>`;
}

export function renderCandidates(
  candidates: CandidateTile[],
  selected: ReadonlySet<string> | string[],
): string {
  const chosen = new Set(selected);
  const tiles = candidates
    .map((c) => {
      const classes = ["tile"];
      if (c.ranked) classes.push("ranked");
      if (chosen.has(c.image_id)) classes.push("selected");
      return (
        `<button type="button" class="${classes.join(" ")}" data-image-id="${attr(c.image_id)}">` +
        `<img src="${attr(c.uri)}" alt="${attr(c.image_id)}">` +
        `<span class="tile-label">${escapeHtml(c.image_id)}</span></button>`
      );
    })
    .join("");
  return `<div class="candidates">${tiles}</div>`;
}

function renderProgress(stimulus: ActiveStimulus): string {
  return `<div class="progress">item ${stimulus.index + 1} of ${stimulus.n_items}</div>`;
}

export function renderIndependent(
  stimulus: IndependentStimulus,
  selected: string[],
): string {
  return (
    renderProgress(stimulus) +
    `<p class="prompt">Which image is <em>${escapeHtml(stimulus.description)}</em>?</p>` +
    renderCandidates(stimulus.candidates, selected) +
    `<p class="hint">Pick exactly one image.</p>` +
    submitButton(selected.length === 1)
  );
}

export function renderHolistic(
  stimulus: HolisticStimulus,
  selected: string[],
): string {
  return (
    renderProgress(stimulus) +
    renderTranscript(stimulus) +
    `<p class="prompt">Which image(s) does <mark class="mention">${escapeHtml(
      stimulus.mention.surface,
    )}</mark> refer to?</p>` +
    renderCandidates(stimulus.candidates, selected) +
    `<p class="hint">Faded images were already ranked; they can still be selected.</p>` +
    submitButton(selected.length > 0)
  );
}

export function renderStimulus(stimulus: ActiveStimulus, selected: string[]): string {
  return stimulus.mode === "independent"
    ? renderIndependent(stimulus, selected)
    : renderHolistic(stimulus, selected);
}

function submitButton(enabled: boolean): string {
  return `<button type="button" id="submit" ${enabled ? "" : "disabled "}class="submit">Submit</button>`;
}

export function renderStart(modes: string[]): string {
  const options = modes
    .map((m) => `<option value="${attr(m)}">${escapeHtml(m)}</option>`)
    .join("");
  return (
    `<form id="start-form" class="start">` +
    `<label>Participant id <input id="participant" required autocomplete="off"></label>` +
    `<label>Protocol <select id="mode">${options}</select></label>` +
    `<button type="submit">Begin</button></form>`
  );
}

export function renderDone(completionCode: string): string {
  return (
    `<div class="done"><p>All items answered. Your completion code:</p>` +
    `<p class="code">${escapeHtml(completionCode)}</p></div>`
  );
}

export function renderError(message: string): string {
  return `<div class="error">${escapeHtml(message)}</div>`;
}
