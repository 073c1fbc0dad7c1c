import { describe, expect, it } from "vitest";

import {
  escapeHtml,
  renderCandidates,
  renderDone,
  renderHolistic,
  renderIndependent,
  renderStart,
  renderUtterance,
} from "../src/render.js";
import type { HolisticStimulus, IndependentStimulus } from "../src/types.js";

const DIALOGUE_TEXTS = [
  "the one with the red mug",
  "yes that one",
  "now the striped cat",
  "the shiny kettle next",
  "and finally the blue bowl",
];

function holisticAt(k: number): HolisticStimulus {
  // server-side truncation: the payload carries utterances 0..k only
  const shown = DIALOGUE_TEXTS.slice(0, k + 1).map((text, index) => ({
    index,
    speaker: index % 2 === 0 ? "A" : "B",
    text,
  }));
  const target = shown[k]!.text;
  const start = target.indexOf("the");
  return {
    done: false,
    mode: "holistic",
    item_id: `d1:m${k}`,
    index: k,
    n_items: 5,
    utterances: shown,
    mention: {
      utterance_index: k,
      span: [start, target.length],
      surface: target.slice(start),
    },
    candidates: [
      { image_id: "img-1", uri: "/images/img-1.jpg" },
      { image_id: "img-2", uri: "/images/img-2.jpg", ranked: true },
      { image_id: "img-3", uri: "/images/img-3.jpg", ranked: false },
    ],
    multi_select: true,
  };
}

describe("holistic transcript", () => {
  it("shows exactly the utterances in the payload, nothing later", () => {
    const html = renderHolistic(holisticAt(2), []);
    for (const text of DIALOGUE_TEXTS.slice(0, 2)) {
      expect(html).toContain(escapeHtml(text));
    }
    // the target line is split by the mention mark
    expect(html).toContain("now ");
    expect(html).toContain('<mark class="mention">the striped cat</mark>');
    for (const text of DIALOGUE_TEXTS.slice(3)) {
      expect(html).not.toContain(text);
    }
  });

  it("wraps the mention span in a mark on the right line", () => {
    const line = renderUtterance(
      { index: 4, speaker: "B", text: "take the red mug now" },
      { utterance_index: 4, span: [5, 16], surface: "the red mug" },
    );
    expect(line).toContain('<mark class="mention">the red mug</mark>');
    expect(line).toContain("take ");
    expect(line).toContain(" now");
  });

  it("leaves non-target lines unmarked", () => {
    const line = renderUtterance(
      { index: 1, speaker: "A", text: "take the red mug now" },
      { utterance_index: 4, span: [5, 16], surface: "the red mug" },
    );
    expect(line).not.toContain("<mark");
  });

  it("escapes markup in utterance text, including inside the span", () => {
    const line = renderUtterance(
      { index: 0, speaker: "A", text: 'a <b>"bold"</b> & claim' },
      { utterance_index: 0, span: [2, 15], surface: '<b>"bold"</b>' },
    );
    expect(line).not.toContain("<b>");
    expect(line).toContain("&lt;b&gt;&quot;bold&quot;&lt;/b&gt;");
    expect(line).toContain("&amp; claim");
  });
});

describe("candidate grid", () => {
  it("flags ranked tiles but keeps every tile a live button", () => {
    const html = renderCandidates(holisticAt(2).candidates, ["img-2"]);
    expect(html).toContain('class="tile ranked selected"');
    expect(html).not.toContain("disabled");
    const buttons = html.match(/<button/g) ?? [];
    expect(buttons).toHaveLength(3);
  });

  it("marks only the selected ids", () => {
    const html = renderCandidates(holisticAt(2).candidates, ["img-1"]);
    expect(html).toContain('class="tile selected" data-image-id="img-1"');
    expect(html).toContain('class="tile ranked" data-image-id="img-2"');
    expect(html).toContain('class="tile" data-image-id="img-3"');
  });
});

describe("independent items", () => {
  const stimulus: IndependentStimulus = {
    done: false,
    mode: "independent",
    item_id: "d1:m0",
    index: 0,
    n_items: 12,
    description: "the <shiny> kettle",
    candidates: [
      { image_id: "img-1", uri: "/images/img-1.jpg" },
      { image_id: "img-2", uri: "/images/img-2.jpg" },
    ],
    multi_select: false,
  };

  it("shows the description escaped and gates submit on a choice", () => {
    const empty = renderIndependent(stimulus, []);
    expect(empty).toContain("the &lt;shiny&gt; kettle");
    expect(empty).toContain("item 1 of 12");
    expect(empty).toMatch(/<button[^>]*id="submit"[^>]*disabled/);
    const chosen = renderIndependent(stimulus, ["img-2"]);
    expect(chosen).not.toMatch(/<button[^>]*id="submit"[^>]*disabled/);
  });
});

describe("shell screens", () => {
  it("start form lists the configured modes", () => {
    const html = renderStart(["independent", "holistic"]);
    expect(html).toContain('<option value="independent">');
    expect(html).toContain('<option value="holistic">');
    expect(html).toContain('id="participant"');
  });

  it("done screen shows the completion code", () => {
    expect(renderDone("DR-a1b2c3")).toContain("DR-a1b2c3");
  });
});
