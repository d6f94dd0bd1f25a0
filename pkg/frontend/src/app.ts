/**
 * Single-page what-if client.
 *
 * Builds the measurement form from the shared schema, keeps per-field
 * validation state, and renders only what the service answered: three
 * probability gauges, the numeric index readout, the slider response
 * curve, and attribution bars. Requests are numbered; a response from a
 * superseded request never reaches the screen.
 */

import type { ApiError, Client, ModelInfo } from "./api.js";
import { ApiError as ApiErrorClass } from "./api.js";
import { LatestGate, throttleLatest } from "./latest.js";
import {
  renderAttribution,
  renderCurve,
  renderGauge,
  renderReadout,
  renderUnavailable,
} from "./render.js";
import type { Features, NumericName, TaskId } from "./schema.js";
import {
  ALL_TASKS,
  DECISION_THRESHOLD,
  GAUGE_TASKS,
  NUMERIC_FIELDS,
  RACE_VALUES,
  REGRESS_TASK,
  SEX_VALUES,
  SIMPLIFIED_FIELDS,
  WHATIF_INTERVAL_MS,
  WHATIF_POINTS,
  numericField,
} from "./schema.js";
import type { FieldName } from "./validate.js";
import { activeFields, validateForm, validateNumeric } from "./validate.js";

export interface App {
  root: HTMLElement;
  /** Settles once no request started so far is still in flight. */
  idle(): Promise<void>;
}

/** Bundle whose input schema is exactly the simplified field set. */
const isSimplifiedBundle = (m: ModelInfo): boolean =>
  m.numeric_features.length === SIMPLIFIED_FIELDS.length &&
  SIMPLIFIED_FIELDS.every((f) => m.numeric_features.includes(f)) &&
  Object.keys(m.categorical_features).length === 0;

/** The served bundle for a task under the chosen model family and mask. */
export const pickBundle = (
  models: ModelInfo[],
  task: TaskId,
  family: string,
  simplified: boolean,
): ModelInfo | undefined =>
  models.find(
    (m) => m.task === task && m.model === family && isSimplifiedBundle(m) === simplified,
  );

const toError = (e: unknown): Error => (e instanceof Error ? e : new Error(String(e)));

const numericInputs = NUMERIC_FIELDS.map(
  (f) => `
  <div class="field" data-field="${f.name}">
    <label for="in-${f.name}">${f.label} <span class="unit">(${f.unit})</span></label>
    <input id="in-${f.name}" name="${f.name}" inputmode="decimal"
           placeholder="${f.min}-${f.max}" autocomplete="off">
    <span class="field-error" data-for="${f.name}"></span>
  </div>`,
).join("");

const selectField = (name: string, label: string, options: readonly string[]) => `
  <div class="field" data-field="${name}">
    <label for="in-${name}">${label}</label>
    <select id="in-${name}" name="${name}">
      <option value="">choose</option>
      ${options.map((o) => `<option value="${o}">${o.replace(/_/g, " ")}</option>`).join("")}
    </select>
    <span class="field-error" data-for="${name}"></span>
  </div>`;

const gaugePanels = GAUGE_TASKS.map(
  (t) => `
  <div class="gauge" data-task="${t.id}">
    <h3>${t.indexLabel} <span class="gauge-kind">probability</span></h3>
    <div class="gauge-body"></div>
  </div>`,
).join("");

const PAGE = `
  <header><h1>Insulin resistance self-assessment</h1></header>
  <section class="panel form-panel">
    <form id="measure-form" novalidate>
      <div class="field-grid">
        ${numericInputs}
        ${selectField("sex", "Sex", SEX_VALUES)}
        ${selectField("race", "Race / ethnicity", RACE_VALUES)}
      </div>
      <div class="controls">
        <label for="in-model">Model</label>
        <select id="in-model" name="model"></select>
        <label class="toggle">
          <input type="checkbox" id="in-simplified"> BMI + glucose only
        </label>
        <button id="submit-btn" type="button" disabled>Assess</button>
        <button id="explain-btn" type="button" disabled>Explain</button>
      </div>
    </form>
    <div id="retry-banner" class="banner hidden">
      <span id="retry-message"></span>
      <button id="retry-btn" type="button">Retry</button>
    </div>
    <p id="status-line"></p>
  </section>
  <section class="panel risk-panel">
    ${gaugePanels}
    <div class="readout" data-task="${REGRESS_TASK.id}">
      <h3>${REGRESS_TASK.indexLabel} <span class="gauge-kind">predicted value</span></h3>
      <div class="readout-body"></div>
    </div>
  </section>
  <section class="panel whatif-panel">
    <h2>What if</h2>
    <div class="whatif-controls">
      <label for="whatif-target">Target</label>
      <select id="whatif-target">
        ${ALL_TASKS.map(
          (t) =>
            `<option value="${t.id}"${t.id === REGRESS_TASK.id ? " selected" : ""}>` +
            `${t.indexLabel} (${t.kind})</option>`,
        ).join("")}
      </select>
      <label for="whatif-feature">Sweep</label>
      <select id="whatif-feature"></select>
      <input type="range" id="whatif-slider" aria-label="swept feature value">
      <span id="whatif-current"></span>
    </div>
    <div id="whatif-chart" class="chart"></div>
  </section>
  <section class="panel explain-panel">
    <h2>Attribution</h2>
    <div id="attribution"></div>
  </section>`;

export function createApp(root: HTMLElement, client: Client): App {
  root.innerHTML = PAGE;

  const q = <T extends HTMLElement>(sel: string): T => {
    const el = root.querySelector<T>(sel);
    if (!el) throw new Error(`missing element ${sel}`);
    return el;
  };

  const inputs = {} as Record<FieldName, HTMLInputElement | HTMLSelectElement>;
  for (const f of NUMERIC_FIELDS) inputs[f.name] = q<HTMLInputElement>(`#in-${f.name}`);
  inputs.sex = q<HTMLSelectElement>("#in-sex");
  inputs.race = q<HTMLSelectElement>("#in-race");

  const modelSelect = q<HTMLSelectElement>("#in-model");
  const simplifiedToggle = q<HTMLInputElement>("#in-simplified");
  const submitBtn = q<HTMLButtonElement>("#submit-btn");
  const explainBtn = q<HTMLButtonElement>("#explain-btn");
  const banner = q<HTMLElement>("#retry-banner");
  const bannerMessage = q<HTMLElement>("#retry-message");
  const retryBtn = q<HTMLButtonElement>("#retry-btn");
  const statusLine = q<HTMLElement>("#status-line");
  const targetSelect = q<HTMLSelectElement>("#whatif-target");
  const featureSelect = q<HTMLSelectElement>("#whatif-feature");
  const slider = q<HTMLInputElement>("#whatif-slider");
  const sliderCurrent = q<HTMLElement>("#whatif-current");
  const chart = q<HTMLElement>("#whatif-chart");
  const attributionEl = q<HTMLElement>("#attribution");

  let modelInfos: ModelInfo[] = [];
  let lastAction: (() => void) | null = null;
  const inflight = new Set<Promise<void>>();
  const submitGate = new LatestGate();
  const whatifGate = new LatestGate();

  const track = (p: Promise<unknown>): void => {
    const entry = p.then(
      () => undefined,
      () => undefined,
    );
    inflight.add(entry);
    void entry.then(() => inflight.delete(entry));
  };

  const idle = async (): Promise<void> => {
    while (inflight.size > 0) {
      await Promise.allSettled([...inflight]);
    }
  };

  const setStatus = (text: string): void => {
    statusLine.textContent = text;
  };

  const showBanner = (err: Error): void => {
    bannerMessage.textContent = err.message;
    banner.classList.remove("hidden");
  };

  const hideBanner = (): void => {
    banner.classList.add("hidden");
  };

  const simplifiedOn = (): boolean => simplifiedToggle.checked;

  const readValues = () => {
    const values = {} as Record<FieldName, string>;
    for (const name of Object.keys(inputs) as FieldName[]) {
      values[name] = inputs[name].value;
    }
    return values;
  };

  const setFieldError = (name: FieldName, message: string): void => {
    q(`.field-error[data-for="${name}"]`).textContent = message;
  };

  const refreshSubmitState = (): void => {
    const usable = modelInfos.length > 0;
    submitBtn.disabled = !usable || !validateForm(readValues(), simplifiedOn()).ok;
  };

  // live per-field feedback: empty fields stay quiet until a submit attempt
  const onFieldInput = (name: FieldName): void => {
    const raw = inputs[name].value;
    if (raw === "") {
      setFieldError(name, "");
    } else if (name === "sex" || name === "race") {
      setFieldError(name, "");
    } else {
      setFieldError(name, validateNumeric(name, raw).error ?? "");
    }
    refreshSubmitState();
  };

  const renderErrors = (errors: Partial<Record<FieldName, string>>): void => {
    for (const name of activeFields(simplifiedOn())) {
      setFieldError(name, errors[name] ?? "");
    }
  };

  const applyIssues = (issues: ApiError["issues"]): void => {
    for (const issue of issues) {
      const name = issue.loc[issue.loc.length - 1];
      if (typeof name === "string" && name in inputs) {
        setFieldError(name as FieldName, issue.msg);
      }
    }
    setStatus("the service rejected some fields; see the highlighted inputs");
  };

  const panelBody = (task: TaskId): HTMLElement =>
    task === REGRESS_TASK.id
      ? q(`.readout[data-task="${task}"] .readout-body`)
      : q(`.gauge[data-task="${task}"] .gauge-body`);

  const gridFor = (name: NumericName): number[] => {
    const f = numericField(name);
    const grid: number[] = [];
    for (let i = 0; i < WHATIF_POINTS; i++) {
      grid.push(f.min + (i * (f.max - f.min)) / (WHATIF_POINTS - 1));
    }
    return grid;
  };

  const applySliderBounds = (): void => {
    const f = numericField(featureSelect.value as NumericName);
    slider.min = String(f.min);
    slider.max = String(f.max);
    slider.step = String(f.step);
    const raw = inputs[f.name].value;
    const parsed = validateNumeric(f.name, raw);
    slider.value = String(parsed.value ?? (f.min + f.max) / 2);
    sliderCurrent.textContent = `${slider.value} ${f.unit}`;
  };

  const refreshMask = (): void => {
    const active = new Set<FieldName>(activeFields(simplifiedOn()));
    for (const name of Object.keys(inputs) as FieldName[]) {
      const on = active.has(name);
      inputs[name].disabled = !on;
      if (!on) setFieldError(name, "");
    }
    const sweepable = NUMERIC_FIELDS.filter((f) => active.has(f.name));
    featureSelect.innerHTML = sweepable
      .map((f) => `<option value="${f.name}">${f.label}</option>`)
      .join("");
    featureSelect.value = active.has("waist") ? "waist" : sweepable[0].name;
    applySliderBounds();
    refreshSubmitState();
  };

  const submit = (): void => {
    const { ok, errors, features } = validateForm(readValues(), simplifiedOn());
    renderErrors(errors);
    refreshSubmitState();
    if (!ok || modelInfos.length === 0) return;
    lastAction = submit;
    hideBanner();
    setStatus("assessing");
    const family = modelSelect.value;
    const simplified = simplifiedOn();
    const ticket = submitGate.issue();
    const jobs: Promise<void>[] = [];
    for (const task of ALL_TASKS) {
      const body = panelBody(task.id);
      const info = pickBundle(modelInfos, task.id, family, simplified);
      if (!info) {
        renderUnavailable(body, "no model serves this mode");
        continue;
      }
      jobs.push(
        client.predict(info.id, features).then((resp) => {
          if (!submitGate.isCurrent(ticket)) return;
          if (task.kind === "classification") {
            renderGauge(body, resp.prediction, resp.decision_threshold ?? DECISION_THRESHOLD);
          } else {
            renderReadout(body, resp.prediction, resp.index_threshold);
          }
        }),
      );
    }
    track(
      Promise.allSettled(jobs).then((settled) => {
        if (!submitGate.isCurrent(ticket)) return;
        const failures = settled.flatMap((s) =>
          s.status === "rejected" ? [toError(s.reason)] : [],
        );
        if (failures.length === 0) {
          explainBtn.disabled = false;
          setStatus("assessment updated");
          return;
        }
        const fieldIssue = failures.find(
          (e): e is ApiError => e instanceof ApiErrorClass && e.status === 422,
        );
        if (fieldIssue) applyIssues(fieldIssue.issues);
        else showBanner(failures[0]);
      }),
    );
  };

  const fireWhatif = (
    taskId: TaskId,
    features: Features,
    feature: NumericName,
    current: number,
  ): void => {
    const info = pickBundle(modelInfos, taskId, modelSelect.value, simplifiedOn());
    if (!info) {
      setStatus("no model serves this mode");
      return;
    }
    const reference =
      info.kind === "regression" ? info.index_threshold : info.decision_threshold;
    const ticket = whatifGate.issue();
    track(
      client
        .whatif(info.id, { ...features, [feature]: current }, feature, gridFor(feature))
        .then((resp) => {
          if (!whatifGate.isCurrent(ticket)) return; // superseded: drop stale curve
          renderCurve(chart, resp, current, reference);
        })
        .catch((err) => {
          if (whatifGate.isCurrent(ticket)) showBanner(toError(err));
        }),
    );
  };

  const throttledWhatif = throttleLatest(WHATIF_INTERVAL_MS, fireWhatif);

  const onSlider = (): void => {
    const feature = featureSelect.value as NumericName;
    const f = numericField(feature);
    sliderCurrent.textContent = `${slider.value} ${f.unit}`;
    inputs[feature].value = slider.value;
    onFieldInput(feature);
    const { ok, features } = validateForm(readValues(), simplifiedOn());
    if (!ok) {
      setStatus("complete the form to run a sweep");
      return;
    }
    throttledWhatif(
      targetSelect.value as TaskId,
      features,
      feature,
      Number(slider.value),
    );
  };

  const explain = (): void => {
    const { ok, features } = validateForm(readValues(), simplifiedOn());
    if (!ok) return;
    const info = pickBundle(modelInfos, "mets_class", modelSelect.value, simplifiedOn());
    if (!info || !info.has_background) {
      setStatus("attribution is not available for this model");
      return;
    }
    lastAction = explain;
    setStatus("sampling attributions");
    track(
      client
        .explain(info.id, features)
        .then((resp) => {
          renderAttribution(attributionEl, resp.attribution);
          setStatus("attribution updated");
        })
        .catch((err) => showBanner(toError(err))),
    );
  };

  const init = (): void => {
    lastAction = init;
    track(
      client
        .models()
        .then((resp) => {
          modelInfos = resp.models;
          const families = [...new Set(modelInfos.map((m) => m.model))].sort();
          modelSelect.innerHTML = families
            .map((f) => `<option value="${f}">${f}</option>`)
            .join("");
          hideBanner();
          setStatus(`${modelInfos.length} models loaded`);
          refreshMask();
        })
        .catch((err) => showBanner(toError(err))),
    );
  };

  for (const name of Object.keys(inputs) as FieldName[]) {
    inputs[name].addEventListener("input", () => onFieldInput(name));
    inputs[name].addEventListener("change", () => onFieldInput(name));
  }
  q<HTMLFormElement>("#measure-form").addEventListener("submit", (e) => {
    e.preventDefault();
    submit();
  });
  submitBtn.addEventListener("click", submit);
  explainBtn.addEventListener("click", explain);
  retryBtn.addEventListener("click", () => {
    hideBanner();
    lastAction?.();
  });
  simplifiedToggle.addEventListener("change", refreshMask);
  featureSelect.addEventListener("change", applySliderBounds);
  slider.addEventListener("input", onSlider);

  refreshMask();
  init();
  return { root, idle };
}
