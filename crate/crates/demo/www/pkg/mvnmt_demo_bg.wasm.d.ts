/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_bleureport_free: (a: number, b: number) => void;
export const __wbg_taskmodel_free: (a: number, b: number) => void;
export const __wbg_translation_free: (a: number, b: number) => void;
export const bleuReport: (a: number, b: number, c: number, d: number) => [number, number, number];
export const bleureport_bleu: (a: number) => number;
export const bleureport_brevityPenalty: (a: number) => number;
export const bleureport_hypLen: (a: number) => number;
export const bleureport_matches: (a: number) => [number, number];
export const bleureport_precisions: (a: number) => [number, number];
export const bleureport_refLen: (a: number) => number;
export const bleureport_tokenAccuracy: (a: number) => number;
export const bleureport_totals: (a: number) => [number, number];
export const klDivergence: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
export const klMonteCarlo: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: bigint) => [number, number, number, number];
export const taskmodel_examples: (a: number, b: number) => [number, number];
export const taskmodel_iterations: (a: number) => number;
export const taskmodel_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
export const taskmodel_train: (a: number, b: number) => [number, number, number];
export const taskmodel_translate: (a: number, b: number, c: number, d: number) => [number, number, number];
export const taskmodel_validationLoss: (a: number) => [number, number, number];
export const translation_attention: (a: number) => [number, number];
export const translation_logProb: (a: number) => number;
export const translation_source: (a: number) => [number, number];
export const translation_words: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_start: () => void;
