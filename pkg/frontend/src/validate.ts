/**
 * Client-side form validation with the service's exact numeric ranges.
 *
 * Bounds are inclusive on both ends, matching the server's validators; a
 * value the form accepts is never rejected by the service and vice versa.
 */

import type { Features, NumericName, Race, Sex } from "./schema.js";
import {
  NUMERIC_FIELDS,
  RACE_VALUES,
  SEX_VALUES,
  SIMPLIFIED_FIELDS,
  numericField,
} from "./schema.js";

export type FieldName = NumericName | "sex" | "race";

/** What the inputs currently hold, all raw strings. */
export type FormValues = Record<FieldName, string>;

export type FieldErrors = Partial<Record<FieldName, string>>;

export interface FormCheck {
  ok: boolean;
  errors: FieldErrors;
  /** Parsed payload for the service; only filled for fields that passed. */
  features: Features;
}

const isNum = (s: string) => s.trim() !== "" && !Number.isNaN(Number(s));

/** Fields the current mask leaves editable, in form order. */
export function activeFields(simplified: boolean): FieldName[] {
  if (simplified) return [...SIMPLIFIED_FIELDS];
  return [...NUMERIC_FIELDS.map((f) => f.name), "sex", "race"];
}

export function validateNumeric(
  name: NumericName,
  raw: string,
): { value?: number; error?: string } {
  const field = numericField(name);
  if (!isNum(raw)) return { error: `Required (${field.unit})` };
  const value = Number(raw);
  if (value < field.min || value > field.max) {
    return { error: `Out of range (${field.min}-${field.max} ${field.unit})` };
  }
  return { value };
}

/** Validate every unmasked field; ok only when all of them pass. */
export function validateForm(values: FormValues, simplified: boolean): FormCheck {
  const errors: FieldErrors = {};
  const features: Features = {};
  for (const name of activeFields(simplified)) {
    if (name === "sex") {
      if ((SEX_VALUES as readonly string[]).includes(values.sex)) {
        features.sex = values.sex as Sex;
      } else {
        errors.sex = "Required";
      }
    } else if (name === "race") {
      if ((RACE_VALUES as readonly string[]).includes(values.race)) {
        features.race = values.race as Race;
      } else {
        errors.race = "Required";
      }
    } else {
      const { value, error } = validateNumeric(name, values[name]);
      if (error !== undefined) errors[name] = error;
      else features[name] = value;
    }
  }
  return { ok: Object.keys(errors).length === 0, errors, features };
}
