/**
 * Typed client for the prediction service's JSON routes.
 *
 * The fetch implementation is injected so tests can replay recorded
 * fixture bytes without a network; only the tiny structural surface the
 * client touches is required of a response.
 */

import type { Features } from "./schema.js";

export interface FetchInit {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}

export interface FetchResponse {
  ok: boolean;
  status: number;
  text(): Promise<string>;
}

export type FetchLike = (url: string, init?: FetchInit) => Promise<FetchResponse>;

export interface ModelInfo {
  id: string;
  model: string;
  task: string;
  kind: "classification" | "regression";
  numeric_features: string[];
  categorical_features: Record<string, string[]>;
  ranges: Record<string, [number, number]>;
  index_kind: string;
  index_threshold: number;
  decision_threshold: number | null;
  has_background: boolean;
}

export interface ModelsResponse {
  schema_version: number;
  models: ModelInfo[];
}

export interface PredictResponse {
  schema_version: number;
  model: string;
  kind: "classification" | "regression";
  prediction: number;
  positive: boolean | null;
  decision_threshold: number | null;
  index_kind: string;
  index_threshold: number;
}

export interface WhatifResponse {
  schema_version: number;
  model: string;
  kind: "classification" | "regression";
  feature: string;
  values: number[];
  predictions: number[];
}

export interface AttributionPayload {
  feature_names: string[];
  values: number[];
  stderr: number[];
  base_value: number;
  prediction: number;
  n_permutations: number;
}

export interface ExplainResponse {
  schema_version: number;
  model: string;
  kind: "classification" | "regression";
  attribution: AttributionPayload;
}

/** One entry of a 422 body's detail array, pointing at a request field. */
export interface FieldIssue {
  loc: (string | number)[];
  msg: string;
  type?: string;
}

/** Non-2xx service reply; `issues` carries per-field validation details. */
export class ApiError extends Error {
  readonly status: number;
  readonly issues: FieldIssue[];

  constructor(status: number, message: string, issues: FieldIssue[] = []) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.issues = issues;
  }
}

const parseIssues = (detail: unknown): FieldIssue[] =>
  Array.isArray(detail)
    ? detail.filter((e): e is FieldIssue => Array.isArray((e as FieldIssue)?.loc))
    : [];

export class Client {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike,
  ) {}

  models(): Promise<ModelsResponse> {
    return this.request("GET", "/models");
  }

  predict(model: string, features: Features): Promise<PredictResponse> {
    return this.request("POST", "/predict", { model, features });
  }

  whatif(
    model: string,
    features: Features,
    feature: string,
    values: number[],
  ): Promise<WhatifResponse> {
    return this.request("POST", "/whatif", { model, features, feature, values });
  }

  explain(
    model: string,
    features: Features,
    nPermutations = 128,
    seed = 0,
  ): Promise<ExplainResponse> {
    return this.request("POST", "/explain", {
      model,
      features,
      n_permutations: nPermutations,
      seed,
    });
  }

  private async request<T>(method: string, path: string, payload?: unknown): Promise<T> {
    const init: FetchInit = { method };
    if (payload !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(payload);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const text = await response.text();
    if (!response.ok) {
      let detail: unknown;
      try {
        detail = (JSON.parse(text) as { detail?: unknown }).detail;
      } catch {
        // non-JSON error body (gateway noise); keep the generic message
      }
      const message =
        typeof detail === "string" && detail !== ""
          ? detail
          : `service error ${response.status}`;
      throw new ApiError(response.status, message, parseIssues(detail));
    }
    return JSON.parse(text) as T;
  }
}
