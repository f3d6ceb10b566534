/* tslint:disable */
/* eslint-disable */

export function bounds_report(params: string, experimental: boolean): string;

export function fig2_curve(p_to: number, points: number, alpha: number, delta1: number, delta2: number, f: number): string;

export function fig3_curve(params: string, eps_target: number, n0_from: number, n0_to: number, points_per_decade: number): string;

export function fig3_params(): string;

export function table1_params(): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly bounds_report: (a: number, b: number, c: number) => [number, number, number, number];
    readonly fig2_curve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly fig3_curve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly fig3_params: () => [number, number];
    readonly table1_params: () => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
