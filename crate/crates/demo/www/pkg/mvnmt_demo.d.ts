/* tslint:disable */
/* eslint-disable */

/**
 * BLEU ingredients for a whitespace-tokenized corpus, one sentence per line.
 */
export class BleuReport {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    bleu(): number;
    brevityPenalty(): number;
    hypLen(): number;
    matches(): Uint32Array;
    precisions(): Float64Array;
    refLen(): number;
    tokenAccuracy(): number;
    totals(): Uint32Array;
}

/**
 * A small VNMT model trained on a synthetic task inside the page.
 */
export class TaskModel {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Validation sources to try.
     */
    examples(n: number): string[];
    iterations(): number;
    /**
     * `task` is one of `copy`, `reverse`, `lexical-map`.
     */
    constructor(task: string, vocab_size: number, seed: bigint);
    train(steps: number): number;
    translate(source: string, beam: number): Translation;
    validationLoss(): number;
}

/**
 * One decoded sentence with its attention matrix, row-major
 * `[output token][source position]`.
 */
export class Translation {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    attention(): Float64Array;
    logProb(): number;
    /**
     * Source tokens including the closing `<eos>`.
     */
    source(): string[];
    /**
     * Output tokens including `<eos>` when the hypothesis finished.
     */
    words(): string[];
}

export function bleuReport(hyp: string, reference: string): BleuReport;

export function klDivergence(mu_q: Float64Array, lv_q: Float64Array, mu_p: Float64Array, lv_p: Float64Array): number;

export function klMonteCarlo(mu_q: Float64Array, lv_q: Float64Array, mu_p: Float64Array, lv_p: Float64Array, samples: number, seed: bigint): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_bleureport_free: (a: number, b: number) => void;
    readonly __wbg_taskmodel_free: (a: number, b: number) => void;
    readonly __wbg_translation_free: (a: number, b: number) => void;
    readonly bleuReport: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly bleureport_bleu: (a: number) => number;
    readonly bleureport_brevityPenalty: (a: number) => number;
    readonly bleureport_hypLen: (a: number) => number;
    readonly bleureport_matches: (a: number) => [number, number];
    readonly bleureport_precisions: (a: number) => [number, number];
    readonly bleureport_refLen: (a: number) => number;
    readonly bleureport_tokenAccuracy: (a: number) => number;
    readonly bleureport_totals: (a: number) => [number, number];
    readonly klDivergence: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
    readonly klMonteCarlo: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: bigint) => [number, number, number, number];
    readonly taskmodel_examples: (a: number, b: number) => [number, number];
    readonly taskmodel_iterations: (a: number) => number;
    readonly taskmodel_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
    readonly taskmodel_train: (a: number, b: number) => [number, number, number];
    readonly taskmodel_translate: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly taskmodel_validationLoss: (a: number) => [number, number, number];
    readonly translation_attention: (a: number) => [number, number];
    readonly translation_logProb: (a: number) => number;
    readonly translation_source: (a: number) => [number, number];
    readonly translation_words: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_drop_slice: (a: number, b: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
