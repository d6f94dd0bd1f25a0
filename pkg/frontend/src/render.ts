/**
 * DOM rendering for gauges, the index readout, what-if curves, and
 * attribution bars.
 *
 * Every number drawn here comes straight out of a service response body.
 * The full-precision value also lands in a data attribute so tests can
 * trace what is on screen back to the recorded fixture bytes.
 */

import type { AttributionPayload, WhatifResponse } from "./api.js";

// display window for the index meter; values outside just pin the fill
const READOUT_LO = 10;
const READOUT_HI = 90;

const esc = (value: unknown): string =>
  String(value ?? "")
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");

export const fmtPercent = (p: number): string => `${(100 * p).toFixed(1)}%`;

export const fmtIndex = (v: number): string => v.toFixed(2);

const clamp01 = (x: number): number => Math.max(0, Math.min(1, x));

export function renderGauge(
  el: HTMLElement,
  probability: number,
  decisionThreshold: number,
): void {
  el.dataset.value = String(probability);
  el.classList.toggle("positive", probability > decisionThreshold);
  el.innerHTML = `
    <div class="meter">
      <div class="meter-fill" style="width:${(100 * clamp01(probability)).toFixed(2)}%"></div>
      <div class="meter-mark" style="left:${(100 * decisionThreshold).toFixed(2)}%"></div>
    </div>
    <span class="gauge-value">${fmtPercent(probability)}</span>`;
}

export function renderReadout(el: HTMLElement, value: number, reference: number): void {
  const frac = (x: number) => clamp01((x - READOUT_LO) / (READOUT_HI - READOUT_LO));
  el.dataset.value = String(value);
  el.classList.toggle("positive", value > reference);
  el.innerHTML = `
    <div class="meter">
      <div class="meter-fill" style="width:${(100 * frac(value)).toFixed(2)}%"></div>
      <div class="meter-mark" style="left:${(100 * frac(reference)).toFixed(2)}%"></div>
    </div>
    <span class="gauge-value">${fmtIndex(value)}</span>
    <span class="gauge-note">reference ${reference}</span>`;
}

export function renderUnavailable(el: HTMLElement, note: string): void {
  delete el.dataset.value;
  el.classList.remove("positive");
  el.innerHTML = `<span class="gauge-note">${esc(note)}</span>`;
}

/** Response curve with the user's current value marked; `reference` draws a
 * horizontal cutoff line when given. */
export function renderCurve(
  el: HTMLElement,
  resp: WhatifResponse,
  current: number,
  reference: number | null,
): void {
  const xs = resp.values;
  const ys = resp.predictions;
  el.dataset.feature = resp.feature;
  el.dataset.predictions = JSON.stringify(ys);
  if (xs.length === 0 || ys.length !== xs.length) {
    el.innerHTML = `<span class="gauge-note">empty sweep</span>`;
    return;
  }
  const xLo = Math.min(...xs);
  const xHi = Math.max(...xs);
  let yLo = Math.min(...ys);
  let yHi = Math.max(...ys);
  if (reference !== null) {
    yLo = Math.min(yLo, reference);
    yHi = Math.max(yHi, reference);
  }
  if (yHi - yLo < 1e-9) {
    yLo -= 1;
    yHi += 1;
  }
  const W = 400;
  const H = 160;
  const PAD = 10;
  const px = (x: number) => PAD + ((x - xLo) / Math.max(xHi - xLo, 1e-9)) * (W - 2 * PAD);
  const py = (y: number) => H - PAD - ((y - yLo) / (yHi - yLo)) * (H - 2 * PAD);
  const points = xs.map((x, i) => `${px(x).toFixed(1)},${py(ys[i]).toFixed(1)}`).join(" ");
  const refLine =
    reference === null
      ? ""
      : `<line class="ref" x1="${PAD}" x2="${W - PAD}" ` +
        `y1="${py(reference).toFixed(1)}" y2="${py(reference).toFixed(1)}"></line>`;
  const markX = px(Math.max(xLo, Math.min(xHi, current))).toFixed(1);
  el.innerHTML = `
    <svg viewBox="0 0 ${W} ${H}" preserveAspectRatio="none" role="img">
      ${refLine}
      <polyline class="curve" points="${points}"></polyline>
      <line class="marker" x1="${markX}" x2="${markX}" y1="${PAD}" y2="${H - PAD}"></line>
    </svg>`;
}

/** Signed contribution bars, largest magnitude first. */
export function renderAttribution(el: HTMLElement, att: AttributionPayload): void {
  const order = att.feature_names
    .map((_, i) => i)
    .sort((a, b) => Math.abs(att.values[b]) - Math.abs(att.values[a]));
  const top = Math.max(...att.values.map(Math.abs), 1e-12);
  const rows = order.map((i) => {
    const v = att.values[i];
    const width = ((100 * Math.abs(v)) / top).toFixed(2);
    return `
      <div class="att-row" data-feature="${esc(att.feature_names[i])}" data-value="${v}">
        <span class="att-name">${esc(att.feature_names[i])}</span>
        <div class="att-track"><div class="att-bar ${v >= 0 ? "pos" : "neg"}" style="width:${width}%"></div></div>
        <span class="att-num">${v.toFixed(4)}</span>
      </div>`;
  });
  el.innerHTML =
    `<div class="att-head">base ${att.base_value.toFixed(4)} to prediction ` +
    `${att.prediction.toFixed(4)} over ${att.n_permutations} orderings</div>` +
    rows.join("");
}
